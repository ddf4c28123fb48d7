#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zpdrl/curator.hpp"
#include "zpdrl/policy.hpp"
#include "zpdrl/verifier.hpp"

namespace zpdrl::grpo {

struct Rollout {
  std::vector<policy::TokenId> tokens;
  /// Log-probabilities under the sampling (old) policy.
  std::vector<double> old_logprobs;
  bool truncated = false;
};

struct RolloutGroup {
  std::size_t prompt_key = 0;
  std::vector<Rollout> responses;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct GrpoConfig {
  std::size_t group_size = 4;
  std::size_t prompts_per_batch = 14;
  std::size_t steps = 300;
  double learning_rate = 0.05;
  double eps_low = 0.2;
  double eps_high = 0.28;
  std::size_t max_gen_len = 64;
  double advantage_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  std::size_t workers = 1;

  /// Throws std::invalid_argument unless eps_high >= eps_low > 0, group_size >= 2,
  /// max_gen_len >= 1 and prompts_per_batch >= 1.
  void validate() const;
};

/// (r - mean) / (population std + eps); exactly zero for a group whose
/// rewards are all equal.
std::vector<double> compute_advantages(std::span<const double> rewards, double advantage_epsilon);

/// true = response enters the loss (it was not cut off at max_gen_len).
/// Truncated responses still count toward the group's reward statistics.
std::vector<bool> overlong_mask(const RolloutGroup& group);

struct SurrogateResult {
  double loss = 0.0;
  policy::Gradient grad;
  std::size_t included_tokens = 0;
};

/// Clipped token-level surrogate without any KL term:
///   loss = -(1/T) sum_{i included, t} min(rho A_i, clip(rho, 1-eps_low, 1+eps_high) A_i)
/// with rho = exp(new - old) and T the included token count over all groups.
SurrogateResult surrogate_loss(std::span<const RolloutGroup> groups, const policy::PolicyParams& params,
                               const GrpoConfig& config);

struct GrpoProblem {
  std::string id;
  std::string prompt;
  std::size_t prompt_key = 0;
  verifier::AnswerValue gold;
};

std::vector<GrpoProblem> make_problems(const curator::CuratedDataset& dataset, std::size_t prompt_buckets);

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double frac_truncated = 0.0;
  double frac_degenerate = 0.0;
};

/// Samples group_size rollouts per problem at temperature 1 from `params`,
/// scores them and fills advantages. Rollout RNGs derive from
/// (config.seed, step, slot), independent of worker scheduling.
std::vector<RolloutGroup> collect_rollouts(const policy::PolicyParams& params, std::span<const GrpoProblem> problems,
                                           const GrpoConfig& config, std::size_t step);

struct StepResult {
  policy::PolicyParams params;
  StepMetrics metrics;
};

/// One on-policy update: fresh rollouts from `params`, then exactly one
/// gradient step with old = current parameters.
StepResult grpo_step(const policy::PolicyParams& params, std::span<const GrpoProblem> problems,
                     const GrpoConfig& config, std::size_t step);

struct TrainResult {
  policy::PolicyParams params;
  std::vector<StepMetrics> metrics;
};

using CheckpointFn = std::function<void(std::size_t step, const policy::PolicyParams&)>;

/// Runs config.steps updates over reshuffled prompt batches.
TrainResult grpo_train(policy::PolicyParams params, std::span<const GrpoProblem> problems, const GrpoConfig& config,
                       const CheckpointFn& on_checkpoint = {});

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepMetrics> metrics);

}  // namespace zpdrl::grpo
