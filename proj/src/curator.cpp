#include "zpdrl/curator.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <set>

#include "zpdrl/eval.hpp"
#include "zpdrl/parallel.hpp"
#include "zpdrl/rng.hpp"
#include "zpdrl/verifier.hpp"

namespace zpdrl::curator {

void to_json(json& j, const AttemptRecord& r) {
  std::string bits;
  for (bool b : r.correctness) bits.push_back(b ? '1' : '0');
  j = json{{"problem_id", r.problem_id},
           {"n_attempts", r.n_attempts},
           {"correctness", bits},
           {"success_count", r.success_count}};
  if (r.responses) j["responses"] = *r.responses;
}

void from_json(const json& j, AttemptRecord& r) {
  r.problem_id = j.at("problem_id").get<std::string>();
  r.n_attempts = j.at("n_attempts").get<std::size_t>();
  const auto bits = j.at("correctness").get<std::string>();
  if (r.n_attempts < 1) throw std::invalid_argument("n_attempts must be positive");
  if (bits.size() != r.n_attempts) throw std::invalid_argument("correctness length differs from n_attempts");
  r.correctness.clear();
  for (char c : bits) {
    if (c != '0' && c != '1') throw std::invalid_argument("correctness must be a string of 0/1");
    r.correctness.push_back(c == '1');
  }
  r.success_count = j.at("success_count").get<std::size_t>();
  const auto actual = static_cast<std::size_t>(std::count(r.correctness.begin(), r.correctness.end(), true));
  if (actual != r.success_count) {
    throw std::invalid_argument("success_count " + std::to_string(r.success_count) + " disagrees with " +
                                std::to_string(actual) + " set correctness bits");
  }
  r.responses.reset();
  if (auto it = j.find("responses"); it != j.end() && !it->is_null()) r.responses = it->get<std::vector<std::string>>();
}

std::string to_string(Bin bin) {
  switch (bin) {
    case Bin::hard:
      return "Hard";
    case Bin::medium:
      return "Medium";
    case Bin::easy:
      return "Easy";
  }
  return "?";
}

Bin parse_bin(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "hard") return Bin::hard;
  if (lower == "medium") return Bin::medium;
  if (lower == "easy") return Bin::easy;
  throw std::invalid_argument("unknown bin '" + name + "' (expected Hard, Medium or Easy)");
}

void to_json(json& j, const DifficultyLabel& d) { j = json{{"tier", d.tier}, {"bin", to_string(d.bin)}}; }

void from_json(const json& j, DifficultyLabel& d) {
  d.tier = j.at("tier").get<int>();
  d.bin = parse_bin(j.at("bin").get<std::string>());
}

Bin bin_for_tier(int tier) {
  if (tier >= 1 && tier <= 5) return Bin::hard;
  if (tier >= 6 && tier <= 11) return Bin::medium;
  if (tier >= 12 && tier <= 15) return Bin::easy;
  throw std::out_of_range("tier " + std::to_string(tier) + " outside 1..15");
}

AttemptRecord score_problem(const Problem& problem, const backend::Backend& backend, std::size_t n,
                            const ScoreParams& params) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  const auto gold = verifier::parse_answer(problem.gold);
  if (!gold) throw DatasetError("gold answer of " + problem.id + " does not parse");
  const auto prompt = eval::build_prompt(problem);
  backend::GenRequest req;
  req.system_prompt = params.use_system_prompt ? prompt.system : std::string{};
  req.user_prompt = prompt.user;
  req.n = n;
  req.max_tokens = params.max_tokens;
  req.temperature = params.temperature;
  req.seed = derive_seed(params.seed, fnv1a64(problem.id));
  auto res = backend.generate(req);
  if (res.texts.size() != n) throw backend::BackendUnavailable("backend returned the wrong number of completions");

  AttemptRecord rec;
  rec.problem_id = problem.id;
  rec.n_attempts = n;
  for (const auto& text : res.texts) {
    const bool ok = verifier::reward(text, *gold).reward == 1.0;
    rec.correctness.push_back(ok);
    rec.success_count += ok ? 1 : 0;
  }
  if (params.keep_responses) rec.responses = std::move(res.texts);
  return rec;
}

std::vector<AttemptRecord> zone_filter(std::span<const AttemptRecord> records) {
  std::vector<AttemptRecord> out;
  for (const auto& r : records) {
    if (r.success_count >= 1 && r.success_count + 1 <= r.n_attempts) out.push_back(r);
  }
  return out;
}

Stratified stratify(std::span<const AttemptRecord> records) {
  Stratified out;
  for (int t = kMinTier; t <= kMaxTier; ++t) out.tiers[t];
  for (const auto& r : records) {
    if (r.success_count == 0 || r.success_count >= r.n_attempts) {
      throw ContractViolation("record " + r.problem_id + " has success_count " + std::to_string(r.success_count) +
                              " of " + std::to_string(r.n_attempts) + "; run zone_filter before stratify");
    }
    if (r.success_count > static_cast<std::size_t>(kMaxTier)) {
      throw ContractViolation("record " + r.problem_id + " has success_count above tier 15");
    }
    const int tier = static_cast<int>(r.success_count);
    out.tiers[tier].push_back(r.problem_id);
    out.labels.push_back({tier, bin_for_tier(tier)});
  }
  return out;
}

BinSample sample_bin(const Stratified& stratified, Bin bin, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> pool;
  for (const auto& [tier, ids] : stratified.tiers) {
    if (bin_for_tier(tier) == bin) pool.insert(pool.end(), ids.begin(), ids.end());
  }
  if (pool.empty()) throw EmptyBinError("bin " + to_string(bin) + " is empty");
  BinSample out;
  if (k >= pool.size()) {
    out.short_bin = k > pool.size();
    k = pool.size();
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  out.ids = std::move(pool);
  return out;
}

CuratedDataset load_curated(const std::filesystem::path& path) {
  CuratedDataset out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    if (j.contains("header")) {
      out.header = j.at("header");
      return;
    }
    if (!j.contains("difficulty_label") || j.at("difficulty_label").is_null() || !j.contains("attempt_record")) {
      throw DatasetError(path.string() + " holds unlabeled records; run `zpdrl curate` on it first");
    }
    CuratedRecord rec;
    rec.problem = j.at("problem").get<Problem>();
    rec.attempt = j.at("attempt_record").get<AttemptRecord>();
    rec.label = j.at("difficulty_label").get<DifficultyLabel>();
    const auto& id = rec.problem.id;
    if (rec.attempt.problem_id != id) throw DatasetError("attempt record id differs from problem id " + id);
    if (rec.attempt.success_count == 0 || rec.attempt.success_count >= rec.attempt.n_attempts) {
      throw DatasetError("record " + id + " has success_count " + std::to_string(rec.attempt.success_count) + "/" +
                         std::to_string(rec.attempt.n_attempts) + ", outside the learnable zone");
    }
    if (rec.label.tier < kMinTier || rec.label.tier > kMaxTier) {
      throw DatasetError("record " + id + " has tier " + std::to_string(rec.label.tier) + " outside 1..15");
    }
    if (static_cast<std::size_t>(rec.label.tier) != rec.attempt.success_count ||
        rec.label.bin != bin_for_tier(rec.label.tier)) {
      throw DatasetError("record " + id + " carries a difficulty label inconsistent with its success count");
    }
    if (!verifier::parse_answer(rec.problem.gold)) throw DatasetError("gold answer of " + id + " does not parse");
    if (!seen.insert(id).second) throw DatasetError("duplicate problem id " + id);
    out.records.push_back(std::move(rec));
  });
  return out;
}

std::filesystem::path rejected_path(const std::filesystem::path& out) {
  auto p = out;
  p += ".rejected.jsonl";
  return p;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::set<std::string> ids_in(const std::filesystem::path& path, json* header) {
  std::set<std::string> ids;
  if (!std::filesystem::exists(path)) return ids;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    if (j.contains("header")) {
      if (header != nullptr) *header = j.at("header");
      return;
    }
    ids.insert(j.at("attempt_record").at("problem_id").get<std::string>());
  });
  return ids;
}

}  // namespace

CurateSummary curate(const std::vector<Problem>& problems, const backend::Backend& backend,
                     const std::filesystem::path& out, const CurateOptions& options) {
  if (options.n_attempts < 2 || options.n_attempts > static_cast<std::size_t>(kMaxTier) + 1) {
    throw std::invalid_argument("curation needs between 2 and 16 attempts per problem");
  }
  const auto rejected = rejected_path(out);
  std::set<std::string> done;
  json existing_header;
  const bool resuming = options.resume && std::filesystem::exists(out);
  if (resuming) {
    done = ids_in(out, &existing_header);
    for (const auto& id : ids_in(rejected, nullptr)) done.insert(id);
    if (!existing_header.is_null() && existing_header.value("n_attempts", std::size_t{0}) != options.n_attempts) {
      throw std::invalid_argument("cannot resume: " + out.string() + " was curated with a different attempt count");
    }
  }

  std::ofstream kept_out(out, resuming ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
  std::ofstream rejected_out(rejected, resuming ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
  if (!kept_out || !rejected_out) throw DatasetError("cannot write " + out.string());
  if (!resuming || existing_header.is_null()) {
    json header = {{"scorer", backend.identity()},
                   {"n_attempts", options.n_attempts},
                   {"temperature", options.score.temperature},
                   {"max_tokens", options.score.max_tokens},
                   {"seed", options.score.seed},
                   {"system_prompt", options.score.use_system_prompt},
                   {"timestamp", options.timestamp.value_or(utc_now())}};
    kept_out << jsonl_line(json{{"header", header}}) << std::flush;
  }

  CurateSummary summary;
  std::vector<const Problem*> todo;
  for (const auto& p : problems) {
    if (done.count(p.id) != 0) {
      ++summary.skipped;
    } else {
      todo.push_back(&p);
    }
  }

  const std::size_t workers = options.workers != 0 ? options.workers : backend.max_in_flight();
  const std::size_t chunk = std::max<std::size_t>(1, workers * 4);
  for (std::size_t begin = 0; begin < todo.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, todo.size() - begin);
    std::vector<std::optional<AttemptRecord>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    parallel_for(count, workers, [&](std::size_t i) {
      try {
        slots[i] = score_problem(*todo[begin + i], backend, options.n_attempts, options.score);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
    for (std::size_t i = 0; i < count; ++i) {
      if (!slots[i]) continue;
      const auto& rec = *slots[i];
      const Problem& problem = *todo[begin + i];
      ++summary.scored;
      if (rec.success_count == 0 || rec.success_count == rec.n_attempts) {
        const bool comfort = rec.success_count == rec.n_attempts;
        ++(comfort ? summary.dropped_comfort : summary.dropped_frustration);
        rejected_out << jsonl_line(
            json{{"problem", problem}, {"attempt_record", rec}, {"zone", comfort ? "comfort" : "frustration"}});
        continue;
      }
      const auto label = stratify(std::span(&rec, 1)).labels.front();
      ++summary.kept;
      kept_out << jsonl_line(json{{"problem", problem}, {"attempt_record", rec}, {"difficulty_label", label}});
    }
    kept_out.flush();
    rejected_out.flush();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return summary;
}

}  // namespace zpdrl::curator
