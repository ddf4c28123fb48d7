#include "zpdrl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "zpdrl/parallel.hpp"
#include "zpdrl/rng.hpp"

namespace zpdrl::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group size G must be >= 2");
  if (prompts_per_batch < 1) throw std::invalid_argument("prompts_per_batch must be >= 1");
  if (!(eps_low > 0.0)) throw std::invalid_argument("eps_low must be > 0");
  if (!(eps_high >= eps_low)) throw std::invalid_argument("eps_high must be >= eps_low");
  if (max_gen_len < 1) throw std::invalid_argument("max_gen_len must be >= 1");
  if (!(advantage_epsilon >= 0.0)) throw std::invalid_argument("advantage_epsilon must be >= 0");
}

std::vector<double> compute_advantages(std::span<const double> rewards, double advantage_epsilon) {
  if (rewards.size() < 2) throw std::invalid_argument("a group needs at least 2 rewards");
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + advantage_epsilon);
  return out;
}

std::vector<bool> overlong_mask(const RolloutGroup& group) {
  std::vector<bool> mask;
  mask.reserve(group.responses.size());
  for (const auto& r : group.responses) mask.push_back(!r.truncated);
  return mask;
}

SurrogateResult surrogate_loss(std::span<const RolloutGroup> groups, const policy::PolicyParams& params,
                               const GrpoConfig& config) {
  SurrogateResult out;
  out.grad.assign(params.weights().size(), 0.0);
  for (const auto& g : groups) {
    if (g.advantages.size() != g.responses.size()) throw std::invalid_argument("advantages not computed for group");
    const auto mask = overlong_mask(g);
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      if (mask[i]) out.included_tokens += g.responses[i].tokens.size();
    }
  }
  if (out.included_tokens == 0) return out;
  const double inv_t = 1.0 / static_cast<double>(out.included_tokens);
  const double lo = 1.0 - config.eps_low;
  const double hi = 1.0 + config.eps_high;

  double objective = 0.0;
  std::vector<double> coeffs;
  for (const auto& g : groups) {
    const auto mask = overlong_mask(g);
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      if (!mask[i]) continue;
      const auto& r = g.responses[i];
      const double a = g.advantages[i];
      const auto new_lp = policy::token_logprobs(params, g.prompt_key, r.tokens);
      coeffs.assign(r.tokens.size(), 0.0);
      bool any = false;
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        const double rho = std::exp(new_lp[t] - r.old_logprobs.at(t));
        const double unclipped = rho * a;
        const double clipped = std::clamp(rho, lo, hi) * a;
        if (unclipped <= clipped) {
          objective += unclipped;
          // d(rho A)/dw = A rho dlogpi/dw; the loss carries a minus sign.
          coeffs[t] = -inv_t * a * rho;
          any = any || coeffs[t] != 0.0;
        } else {
          objective += clipped;
        }
      }
      if (any) policy::accumulate_logprob_grad(params, g.prompt_key, r.tokens, coeffs, out.grad);
    }
  }
  out.loss = -objective * inv_t;
  return out;
}

std::vector<GrpoProblem> make_problems(const curator::CuratedDataset& dataset, std::size_t prompt_buckets) {
  std::vector<GrpoProblem> out;
  out.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    auto gold = verifier::parse_answer(rec.problem.gold);
    if (!gold) throw DatasetError("gold answer of " + rec.problem.id + " does not parse");
    out.push_back({rec.problem.id, rec.problem.prompt, policy::prompt_key(rec.problem.prompt, prompt_buckets),
                   std::move(*gold)});
  }
  return out;
}

std::vector<RolloutGroup> collect_rollouts(const policy::PolicyParams& params, std::span<const GrpoProblem> problems,
                                           const GrpoConfig& config, std::size_t step) {
  const std::size_t g_size = config.group_size;
  std::vector<RolloutGroup> groups(problems.size());
  parallel_for(problems.size(), config.workers, [&](std::size_t p) {
    auto& g = groups[p];
    g.prompt_key = problems[p].prompt_key;
    for (std::size_t i = 0; i < g_size; ++i) {
      Rng rng(derive_seed(config.seed, step, p * g_size + i));
      auto s = policy::sample(params, g.prompt_key, config.max_gen_len, 1.0, rng);
      const auto text = params.vocab().detokenize(s.tokens);
      g.rewards.push_back(verifier::reward(text, problems[p].gold).reward);
      g.responses.push_back({std::move(s.tokens), std::move(s.logprobs), s.truncated});
    }
    g.advantages = compute_advantages(g.rewards, config.advantage_epsilon);
  });
  return groups;
}

StepResult grpo_step(const policy::PolicyParams& params, std::span<const GrpoProblem> problems,
                     const GrpoConfig& config, std::size_t step) {
  config.validate();
  if (problems.empty()) throw std::invalid_argument("grpo_step needs at least one problem");
  const auto groups = collect_rollouts(params, problems, config, step);

  StepMetrics m;
  m.step = step;
  std::size_t responses = 0;
  std::size_t truncated = 0;
  std::size_t degenerate = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      m.mean_reward += g.rewards[i];
      truncated += g.responses[i].truncated ? 1 : 0;
      ++responses;
    }
    if (std::all_of(g.rewards.begin(), g.rewards.end(), [&](double r) { return r == g.rewards.front(); })) {
      ++degenerate;
    }
  }
  m.mean_reward /= static_cast<double>(responses);
  m.frac_truncated = static_cast<double>(truncated) / static_cast<double>(responses);
  m.frac_degenerate = static_cast<double>(degenerate) / static_cast<double>(groups.size());

  const auto s = surrogate_loss(groups, params, config);
  m.loss = s.loss;
  StepResult out{params, m};
  auto w = out.params.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (s.grad[i] != 0.0) w[i] -= config.learning_rate * s.grad[i];
  }
  return out;
}

TrainResult grpo_train(policy::PolicyParams params, std::span<const GrpoProblem> problems, const GrpoConfig& config,
                       const CheckpointFn& on_checkpoint) {
  config.validate();
  TrainResult result{std::move(params), {}};
  if (config.steps == 0) return result;
  if (problems.empty()) throw std::invalid_argument("grpo_train needs a nonempty dataset");

  Rng rng(derive_seed(config.seed, 0x5348554646ULL));
  std::vector<std::size_t> order(problems.size());
  std::size_t cursor = order.size();
  std::vector<GrpoProblem> batch;
  result.metrics.reserve(config.steps);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.prompts_per_batch) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_in_place(order, rng);
        cursor = 0;
      }
      batch.push_back(problems[order[cursor++]]);
    }
    auto r = grpo_step(result.params, batch, config, step);
    result.params = std::move(r.params);
    result.metrics.push_back(r.metrics);
    if (on_checkpoint && config.checkpoint_every != 0 && step % config.checkpoint_every == 0) {
      on_checkpoint(step, result.params);
    }
  }
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepMetrics> metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,mean_reward,loss,frac_truncated,frac_degenerate\n";
  char buf[160];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", m.step, m.mean_reward, m.loss, m.frac_truncated,
                  m.frac_degenerate);
    out << buf;
  }
}

}  // namespace zpdrl::grpo
