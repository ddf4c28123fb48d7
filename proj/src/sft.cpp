#include "zpdrl/sft.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "zpdrl/rng.hpp"

namespace zpdrl::sft {

LoadedExamples make_examples(const std::vector<Problem>& problems, const policy::Vocab& vocab,
                             std::size_t prompt_buckets, std::size_t max_seq_len) {
  LoadedExamples out;
  for (const auto& p : problems) {
    if (!p.solution) throw DatasetError("problem " + p.id + " has no solution trace for supervised training");
    auto prompt = vocab.tokenize(p.prompt);
    auto response = vocab.tokenize(*p.solution);
    if (!prompt || !response) {
      ++out.dropped_untokenizable;
      continue;
    }
    response->push_back(vocab.stop());
    if (prompt->size() + response->size() > max_seq_len) {
      ++out.dropped_overlength;
      continue;
    }
    out.examples.push_back({policy::prompt_key(p.prompt, prompt_buckets), std::move(*prompt), std::move(*response)});
  }
  return out;
}

LossWithGrad sft_loss(const policy::PolicyParams& params, std::span<const SftExample> batch, bool mask_prompt) {
  if (batch.empty()) throw std::invalid_argument("sft_loss needs a nonempty batch");
  std::size_t total = 0;
  for (const auto& ex : batch) {
    if (ex.response_tokens.empty() || ex.response_tokens.back() != params.vocab().stop()) {
      throw std::invalid_argument("response tokens must end with STOP");
    }
    total += ex.response_tokens.size() + (mask_prompt ? 0 : ex.prompt_tokens.size());
  }
  const double scale = 1.0 / static_cast<double>(total);
  LossWithGrad out;
  out.grad.assign(params.weights().size(), 0.0);
  auto add = [&](std::size_t key, const std::vector<policy::TokenId>& tokens) {
    for (double lp : policy::token_logprobs(params, key, tokens)) out.loss -= lp;
    const std::vector<double> coeffs(tokens.size(), -scale);
    policy::accumulate_logprob_grad(params, key, tokens, coeffs, out.grad);
  };
  for (const auto& ex : batch) {
    if (!mask_prompt && !ex.prompt_tokens.empty()) add(ex.prompt_key, ex.prompt_tokens);
    add(ex.prompt_key, ex.response_tokens);
  }
  out.loss *= scale;
  return out;
}

SftResult sft_train(policy::PolicyParams params, std::span<const SftExample> dataset, const SftConfig& config) {
  SftResult result{std::move(params), {}};
  if (config.steps == 0) return result;
  if (dataset.empty()) throw std::invalid_argument("sft_train needs a nonempty dataset");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::vector<SftExample> batch;
  result.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_in_place(order, rng);
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    auto lg = sft_loss(result.params, batch, config.mask_prompt);
    result.losses.push_back(lg.loss);
    auto w = result.params.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (lg.grad[i] != 0.0) w[i] -= config.learning_rate * lg.grad[i];
    }
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, losses[i]);
    out << buf;
  }
}

}  // namespace zpdrl::sft
