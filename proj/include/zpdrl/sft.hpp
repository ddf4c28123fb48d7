#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zpdrl/dataset.hpp"
#include "zpdrl/policy.hpp"

namespace zpdrl::sft {

struct SftExample {
  std::size_t prompt_key = 0;
  std::vector<policy::TokenId> prompt_tokens;
  /// Trace, boxed answer and a final STOP.
  std::vector<policy::TokenId> response_tokens;
};

struct LoadedExamples {
  std::vector<SftExample> examples;
  std::size_t dropped_overlength = 0;
  std::size_t dropped_untokenizable = 0;
};

/// Builds examples from problems carrying a `solution`. Examples whose
/// prompt + response + STOP exceed max_seq_len are dropped (not truncated).
LoadedExamples make_examples(const std::vector<Problem>& problems, const policy::Vocab& vocab,
                             std::size_t prompt_buckets, std::size_t max_seq_len);

struct LossWithGrad {
  double loss = 0.0;
  policy::Gradient grad;
};

/// Mean token negative log-likelihood over the batch's response tokens.
/// With mask_prompt = false the prompt tokens are also scored, as a prefix
/// sequence of their own under the same prompt key.
LossWithGrad sft_loss(const policy::PolicyParams& params, std::span<const SftExample> batch, bool mask_prompt = true);

struct SftConfig {
  std::size_t batch_size = 16;
  std::size_t steps = 0;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  bool mask_prompt = true;
};

struct SftResult {
  policy::PolicyParams params;
  /// Batch loss before each update.
  std::vector<double> losses;
};

/// Plain SGD over reshuffled epochs. Deterministic for a fixed
/// (seed, config, dataset).
SftResult sft_train(policy::PolicyParams params, std::span<const SftExample> dataset, const SftConfig& config);

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses);

}  // namespace zpdrl::sft
