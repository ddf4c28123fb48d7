#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zpdrl/backend.hpp"
#include "zpdrl/curator.hpp"
#include "zpdrl/dataset.hpp"

namespace zpdrl::eval {

/// The unified system prompt used for training, curation and evaluation.
std::string_view system_prompt();

struct PromptPair {
  std::string system;
  std::string user;
};

/// System prompt plus the problem prompt, unmodified.
PromptPair build_prompt(const Problem& problem);

struct Cell {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

struct EvalItem {
  Problem problem;
  std::optional<curator::DifficultyLabel> label;
};

/// Plain problem files yield unlabeled items; curated files keep their labels.
std::vector<EvalItem> load_items(const std::filesystem::path& path);

struct EvalConfig {
  std::string checkpoint_id;
  std::size_t max_gen_len = 64;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalReport {
  std::size_t n_problems = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  std::map<int, Cell> per_tier;
  std::map<curator::Bin, Cell> per_bin;
  bool complete = true;
  std::string error;
  EvalConfig config;
};

/// Greedy single-sample decoding per problem, scored by the verifier and
/// folded in input order. A backend failure stops the fold and returns the
/// problems scored so far with complete = false.
EvalReport evaluate(const backend::Backend& backend, std::span<const EvalItem> items, const EvalConfig& config);

json to_json(const EvalReport& report);
/// Bin / Size / Accuracy table followed by the per-tier breakdown.
std::string to_markdown(const EvalReport& report);

}  // namespace zpdrl::eval
