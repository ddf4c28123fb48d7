#include "zpdrl/eval.hpp"

#include <cstdio>
#include <exception>

#include "zpdrl/parallel.hpp"
#include "zpdrl/verifier.hpp"

namespace zpdrl::eval {

std::string_view system_prompt() {
  static constexpr std::string_view kPrompt =
      "You FIRST think about the reasoning process as an internal monologue step by step and then provide the "
      "final answer.\n"
      "The reasoning process MUST BE enclosed within <think></think> tags.\n"
      "The final answer MUST BE put in \\boxed{}.";
  return kPrompt;
}

PromptPair build_prompt(const Problem& problem) { return {std::string(system_prompt()), problem.prompt}; }

std::vector<EvalItem> load_items(const std::filesystem::path& path) {
  std::vector<EvalItem> items;
  bool curated = false;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    if (j.contains("header")) curated = true;
  });
  if (curated) {
    for (auto& r : curator::load_curated(path).records) items.push_back({std::move(r.problem), r.label});
  } else {
    for (auto& p : load_problems(path)) items.push_back({std::move(p), std::nullopt});
  }
  return items;
}

EvalReport evaluate(const backend::Backend& backend, std::span<const EvalItem> items, const EvalConfig& config) {
  std::vector<std::optional<bool>> correct(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  parallel_for(items.size(), config.workers, [&](std::size_t i) {
    try {
      const auto prompt = build_prompt(items[i].problem);
      backend::GenRequest req;
      req.system_prompt = prompt.system;
      req.user_prompt = prompt.user;
      req.n = 1;
      req.max_tokens = config.max_gen_len;
      req.temperature = 0.0;
      req.seed = config.seed;
      const auto res = backend.generate(req);
      correct[i] = verifier::reward(res.texts.at(0), items[i].problem.gold).reward == 1.0;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });

  EvalReport report;
  report.config = config;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) {
      report.complete = false;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        report.error = "problem " + items[i].problem.id + ": " + e.what();
      } catch (...) {
        report.error = "problem " + items[i].problem.id + ": unknown error";
      }
      break;
    }
    const bool ok = *correct[i];
    ++report.n_problems;
    report.n_correct += ok ? 1 : 0;
    if (const auto& label = items[i].label) {
      auto& tier = report.per_tier[label->tier];
      ++tier.n;
      tier.correct += ok ? 1 : 0;
      auto& bin = report.per_bin[label->bin];
      ++bin.n;
      bin.correct += ok ? 1 : 0;
    }
  }
  report.accuracy =
      report.n_problems == 0 ? 0.0 : static_cast<double>(report.n_correct) / static_cast<double>(report.n_problems);
  return report;
}

json to_json(const EvalReport& report) {
  json tiers = json::object();
  for (const auto& [tier, cell] : report.per_tier) {
    tiers[std::to_string(tier)] = {{"n", cell.n}, {"correct", cell.correct}};
  }
  json bins = json::object();
  for (const auto& [bin, cell] : report.per_bin) {
    bins[curator::to_string(bin)] = {{"n", cell.n}, {"correct", cell.correct}};
  }
  json j = {
      {"n_problems", report.n_problems},
      {"n_correct", report.n_correct},
      {"accuracy", report.accuracy},
      {"per_tier", tiers},
      {"per_bin", bins},
      {"complete", report.complete},
      {"config",
       {{"checkpoint", report.config.checkpoint_id},
        {"max_gen_len", report.config.max_gen_len},
        {"seed", report.config.seed}}},
  };
  if (!report.complete) j["error"] = report.error;
  return j;
}

namespace {
std::string percent(const Cell& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * c.accuracy());
  return buf;
}
}  // namespace

std::string to_markdown(const EvalReport& report) {
  std::string md = "# Evaluation report\n\n";
  md += "Checkpoint: `" + report.config.checkpoint_id + "`, max generation length " +
        std::to_string(report.config.max_gen_len) + ", greedy decoding.\n\n";
  if (!report.complete) md += "**Incomplete:** " + report.error + "\n\n";
  md += "| Bin | Size | Accuracy |\n|---|---:|---:|\n";
  for (const auto& [bin, cell] : report.per_bin) {
    md += "| " + curator::to_string(bin) + " | " + std::to_string(cell.n) + " | " + percent(cell) + " |\n";
  }
  const Cell all{report.n_problems, report.n_correct};
  md += "| All | " + std::to_string(all.n) + " | " + percent(all) + " |\n";
  if (!report.per_tier.empty()) {
    md += "\n| Tier | Size | Correct | Accuracy |\n|---:|---:|---:|---:|\n";
    for (const auto& [tier, cell] : report.per_tier) {
      md += "| " + std::to_string(tier) + " | " + std::to_string(cell.n) + " | " + std::to_string(cell.correct) +
            " | " + percent(cell) + " |\n";
    }
  }
  return md;
}

}  // namespace zpdrl::eval
