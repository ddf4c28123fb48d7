#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zpdrl/backend.hpp"
#include "zpdrl/dataset.hpp"

namespace zpdrl::curator {

inline constexpr std::size_t kDefaultAttempts = 16;
inline constexpr int kMinTier = 1;
inline constexpr int kMaxTier = 15;

struct AttemptRecord {
  std::string problem_id;
  std::size_t n_attempts = 0;
  std::vector<bool> correctness;
  std::size_t success_count = 0;
  std::optional<std::vector<std::string>> responses;
};

void to_json(json& j, const AttemptRecord& r);
/// Rejects records whose success_count disagrees with the correctness bits.
void from_json(const json& j, AttemptRecord& r);

enum class Bin { hard, medium, easy };

std::string to_string(Bin bin);
Bin parse_bin(const std::string& name);

struct DifficultyLabel {
  int tier = 0;
  Bin bin = Bin::hard;
  friend bool operator==(const DifficultyLabel&, const DifficultyLabel&) = default;
};

void to_json(json& j, const DifficultyLabel& d);
void from_json(const json& j, DifficultyLabel& d);

/// Hard 1-5, Medium 6-11, Easy 12-15. Throws std::out_of_range otherwise.
Bin bin_for_tier(int tier);

/// Thrown when records that should have been zone-filtered reach stratify.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class EmptyBinError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoreParams {
  std::size_t max_tokens = 64;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool use_system_prompt = true;
  bool keep_responses = false;
};

/// One request of n samples; the request seed is derived from (seed, problem id)
/// so a problem's score does not depend on its position in the input.
AttemptRecord score_problem(const Problem& problem, const backend::Backend& backend, std::size_t n,
                            const ScoreParams& params);

/// Keeps records with 1 <= success_count <= n_attempts - 1, in order.
std::vector<AttemptRecord> zone_filter(std::span<const AttemptRecord> records);

struct Stratified {
  /// Tiers 1..15, each holding problem ids in input order (possibly empty).
  std::map<int, std::vector<std::string>> tiers;
  /// Aligned with the input records.
  std::vector<DifficultyLabel> labels;
};

/// Throws ContractViolation for a record in the comfort or frustration zone
/// or whose success count falls outside tiers 1..15.
Stratified stratify(std::span<const AttemptRecord> records);

struct BinSample {
  std::vector<std::string> ids;
  /// Set when the bin held fewer than k ids and all of them were returned.
  bool short_bin = false;
};

/// k ids uniformly without replacement from the bin. Throws EmptyBinError.
BinSample sample_bin(const Stratified& stratified, Bin bin, std::size_t k, std::uint64_t seed);

struct CuratedRecord {
  Problem problem;
  AttemptRecord attempt;
  DifficultyLabel label;
};

struct CuratedDataset {
  json header;
  std::vector<CuratedRecord> records;
};

/// Loads a curated file. Records must carry a difficulty label consistent
/// with their attempt record and lie in tiers 1..15; an unlabeled file is
/// reported as needing `curate`.
CuratedDataset load_curated(const std::filesystem::path& path);

struct CurateOptions {
  std::size_t n_attempts = kDefaultAttempts;
  ScoreParams score;
  bool resume = false;
  /// 0 means use the backend's max_in_flight().
  std::size_t workers = 0;
  /// Header timestamp; current UTC time when unset.
  std::optional<std::string> timestamp;
};

struct CurateSummary {
  std::size_t scored = 0;
  std::size_t kept = 0;
  std::size_t dropped_comfort = 0;
  std::size_t dropped_frustration = 0;
  std::size_t skipped = 0;
};

/// Sidecar receiving zone-filtered records (kept for resumption and audit).
std::filesystem::path rejected_path(const std::filesystem::path& out);

/// Scores every problem, writes survivors with labels to `out` (header line
/// first) and dropped records to rejected_path(out). Completed records are
/// flushed before a BackendUnavailable is rethrown; with resume set, ids
/// already present in either file are skipped.
CurateSummary curate(const std::vector<Problem>& problems, const backend::Backend& backend,
                     const std::filesystem::path& out, const CurateOptions& options);

}  // namespace zpdrl::curator
