// zpdrl: curation, training and evaluation driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "zpdrl/backend.hpp"
#include "zpdrl/curator.hpp"
#include "zpdrl/dataset.hpp"
#include "zpdrl/eval.hpp"
#include "zpdrl/grpo.hpp"
#include "zpdrl/policy.hpp"
#include "zpdrl/sft.hpp"
#include "zpdrl/toy_task.hpp"
#include "zpdrl/verifier.hpp"

namespace {

using namespace zpdrl;
using nlohmann::json;

struct BackendOptions {
  std::string kind = "toy";
  std::string ckpt;
  std::string config_file;
  backend::HttpConfig http;
  double timeout_secs = -1;
  int max_retries = -1;
  std::size_t max_in_flight = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "toy or http")->check(CLI::IsMember({"toy", "http"}));
    cmd->add_option("--ckpt", ckpt, "policy checkpoint for the toy backend (zero policy if omitted)");
    cmd->add_option("--backend-config", config_file,
                    "JSON file with base_url, path, model, api_key_env, timeout_secs, max_retries, max_in_flight");
    cmd->add_option("--base-url", http.base_url);
    cmd->add_option("--model", http.model);
    cmd->add_option("--timeout-secs", timeout_secs);
    cmd->add_option("--max-retries", max_retries);
    cmd->add_option("--max-in-flight", max_in_flight);
  }

  std::unique_ptr<backend::Backend> build() const {
    if (kind == "toy") {
      if (ckpt.empty()) return std::make_unique<backend::ToyBackend>(policy::PolicyParams(policy::Vocab::toy()), "toy-policy:zero");
      return std::make_unique<backend::ToyBackend>(policy::load_checkpoint(ckpt), "toy-policy:" + checkpoint_id(ckpt));
    }
    backend::HttpConfig cfg = http;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw std::runtime_error("cannot open " + config_file);
      const auto j = json::parse(in);
      cfg.base_url = j.value("base_url", cfg.base_url);
      cfg.path = j.value("path", cfg.path);
      cfg.model = j.value("model", cfg.model);
      cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
      cfg.timeout_secs = j.value("timeout_secs", cfg.timeout_secs);
      cfg.max_retries = j.value("max_retries", cfg.max_retries);
      cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    }
    if (timeout_secs > 0) cfg.timeout_secs = timeout_secs;
    if (max_retries >= 0) cfg.max_retries = max_retries;
    if (max_in_flight > 0) cfg.max_in_flight = max_in_flight;
    return std::make_unique<backend::HttpBackend>(cfg);
  }

  static std::string checkpoint_id(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
    return std::filesystem::path(path).filename().string() + "@" + hex;
  }
};

int run_verify(const std::string& in_path, const std::string& out_path) {
  std::ifstream file_in;
  std::istream* in = &std::cin;
  if (!in_path.empty() && in_path != "-") {
    file_in.open(in_path);
    if (!file_in) throw std::runtime_error("cannot open " + in_path);
    in = &file_in;
  }
  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    file_out.open(out_path, std::ios::binary);
    if (!file_out) throw std::runtime_error("cannot write " + out_path);
    out = &file_out;
  }
  std::string line;
  while (std::getline(*in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json result;
    try {
      const auto j = json::parse(line);
      const auto outcome = verifier::reward(j.at("response").get<std::string>(), j.at("gold").get<std::string>());
      result["reward"] = static_cast<int>(outcome.reward);
      result["extracted"] = outcome.extracted ? json(*outcome.extracted) : json(nullptr);
      result["failure_reason"] =
          outcome.failure_reason ? json(std::string(verifier::to_string(*outcome.failure_reason))) : json(nullptr);
    } catch (const std::exception&) {
      // A record that is not {"response", "gold"} earns nothing.
      result = {{"reward", 0}, {"extracted", nullptr}, {"failure_reason", "unparseable"}};
    }
    *out << result.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difficulty-stratified curation, SFT and GRPO on a toy policy"};
  app.require_subcommand(1);

  // toy-task
  auto* toy_cmd = app.add_subcommand("toy-task", "emit toy arithmetic problems (with solution traces) as JSONL");
  std::string toy_split = "sft", toy_out;
  toy::ToyTaskConfig toy_cfg;
  toy_cmd->add_option("--split", toy_split, "sft, rl or eval")->check(CLI::IsMember({"sft", "rl", "eval"}));
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--split-seed", toy_cfg.split_seed);
  toy_cmd->add_option("--min-operand", toy_cfg.min_operand)->check(CLI::Range(0, 9));

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "score {response, gold} JSONL records");
  std::string verify_in, verify_out;
  verify_cmd->add_option("--in", verify_in, "input JSONL (stdin if omitted)");
  verify_cmd->add_option("--out", verify_out, "output JSONL (stdout if omitted)");

  // curate
  auto* curate_cmd = app.add_subcommand("curate", "score problems by repeated sampling and stratify by difficulty");
  std::string curate_in, curate_out, curate_timestamp;
  curator::CurateOptions curate_opts;
  bool no_system_prompt = false;
  BackendOptions curate_backend;
  curate_cmd->add_option("--in", curate_in)->required();
  curate_cmd->add_option("--out", curate_out)->required();
  curate_cmd->add_option("--n", curate_opts.n_attempts, "attempts per problem")->check(CLI::Range(2, 16));
  curate_cmd->add_option("--temperature", curate_opts.score.temperature)->check(CLI::NonNegativeNumber);
  curate_cmd->add_option("--max-tokens", curate_opts.score.max_tokens)->check(CLI::PositiveNumber);
  curate_cmd->add_option("--seed", curate_opts.score.seed);
  curate_cmd->add_flag("--keep-responses", curate_opts.score.keep_responses);
  curate_cmd->add_flag("--resume", curate_opts.resume);
  curate_cmd->add_flag("--no-system-prompt", no_system_prompt);
  curate_cmd->add_option("--workers", curate_opts.workers, "concurrent problems (default: backend max_in_flight)");
  curate_cmd->add_option("--timestamp", curate_timestamp, "header timestamp (default: now, UTC)");
  curate_backend.add(curate_cmd);

  // sample-bin
  auto* bin_cmd = app.add_subcommand("sample-bin", "draw k curated records from one difficulty bin");
  std::string bin_in, bin_out, bin_name;
  std::size_t bin_k = 0;
  std::uint64_t bin_seed = 0;
  bin_cmd->add_option("--in", bin_in)->required();
  bin_cmd->add_option("--out", bin_out)->required();
  bin_cmd->add_option("--bin", bin_name)->required();
  bin_cmd->add_option("--k", bin_k)->required()->check(CLI::PositiveNumber);
  bin_cmd->add_option("--seed", bin_seed);

  // sft
  auto* sft_cmd = app.add_subcommand("sft", "supervised fine-tuning on solution traces");
  std::string sft_data, sft_out, sft_init, sft_csv;
  sft::SftConfig sft_cfg;
  sft_cfg.learning_rate = 5.0;
  sft_cfg.steps = 1000;
  std::size_t sft_max_seq = 128;
  bool sft_no_mask = false;
  sft_cmd->add_option("--data", sft_data)->required();
  sft_cmd->add_option("--out", sft_out)->required();
  sft_cmd->add_option("--init", sft_init, "starting checkpoint (zero policy if omitted)");
  sft_cmd->add_option("--batch", sft_cfg.batch_size)->check(CLI::PositiveNumber);
  sft_cmd->add_option("--steps", sft_cfg.steps);
  sft_cmd->add_option("--lr", sft_cfg.learning_rate);
  sft_cmd->add_option("--seed", sft_cfg.seed);
  sft_cmd->add_option("--max-seq-len", sft_max_seq)->check(CLI::PositiveNumber);
  sft_cmd->add_option("--loss-csv", sft_csv, "loss history (default: <out>.loss.csv)");
  sft_cmd->add_flag("--no-prompt-mask", sft_no_mask, "also train on prompt tokens");

  // grpo
  auto* grpo_cmd = app.add_subcommand("grpo", "GRPO on a curated dataset");
  std::string grpo_data, grpo_init, grpo_out, grpo_csv;
  grpo::GrpoConfig grpo_cfg;
  grpo_cfg.learning_rate = 40.0;
  grpo_cmd->add_option("--data", grpo_data)->required();
  grpo_cmd->add_option("--init", grpo_init, "starting checkpoint (zero policy if omitted)");
  grpo_cmd->add_option("--out", grpo_out)->required();
  grpo_cmd->add_option("--g", grpo_cfg.group_size)->check(CLI::Range(2, 1 << 20));
  grpo_cmd->add_option("--prompts-per-batch", grpo_cfg.prompts_per_batch)->check(CLI::PositiveNumber);
  grpo_cmd->add_option("--steps", grpo_cfg.steps);
  grpo_cmd->add_option("--lr", grpo_cfg.learning_rate);
  grpo_cmd->add_option("--eps-low", grpo_cfg.eps_low);
  grpo_cmd->add_option("--eps-high", grpo_cfg.eps_high);
  grpo_cmd->add_option("--max-gen-len", grpo_cfg.max_gen_len)->check(CLI::PositiveNumber);
  grpo_cmd->add_option("--advantage-epsilon", grpo_cfg.advantage_epsilon);
  grpo_cmd->add_option("--seed", grpo_cfg.seed);
  grpo_cmd->add_option("--checkpoint-every", grpo_cfg.checkpoint_every, "write <out>.step<k> every k steps");
  grpo_cmd->add_option("--workers", grpo_cfg.workers);
  grpo_cmd->add_option("--metrics-csv", grpo_csv, "per-step metrics (default: <out>.metrics.csv)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation with boxed-answer verification");
  std::string eval_data, eval_out, eval_md;
  eval::EvalConfig eval_cfg;
  BackendOptions eval_backend;
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--out", eval_out)->required();
  eval_cmd->add_option("--markdown", eval_md, "Markdown report (default: <out without .json>.md)");
  eval_cmd->add_option("--max-gen-len", eval_cfg.max_gen_len)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_cfg.seed);
  eval_cmd->add_option("--workers", eval_cfg.workers);
  eval_backend.add(eval_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*toy_cmd) {
      const auto problems = toy::problems(toy::parse_split(toy_split), toy_cfg);
      write_problems(toy_out, problems);
      std::cerr << "wrote " << problems.size() << " " << toy_split << " problems to " << toy_out << "\n";
    } else if (*verify_cmd) {
      return run_verify(verify_in, verify_out);
    } else if (*curate_cmd) {
      curate_opts.score.use_system_prompt = !no_system_prompt;
      if (!curate_timestamp.empty()) curate_opts.timestamp = curate_timestamp;
      const auto problems = load_problems(curate_in);
      const auto be = curate_backend.build();
      try {
        const auto s = curator::curate(problems, *be, curate_out, curate_opts);
        std::cerr << "scored " << s.scored << " (skipped " << s.skipped << "), kept " << s.kept << ", dropped "
                  << s.dropped_comfort << " comfort / " << s.dropped_frustration << " frustration\n";
      } catch (const backend::BackendUnavailable& e) {
        std::cerr << "error: " << e.what() << "\ncompleted records were flushed; rerun with --resume\n";
        return 3;
      }
    } else if (*bin_cmd) {
      const auto data = curator::load_curated(bin_in);
      std::vector<curator::AttemptRecord> attempts;
      for (const auto& r : data.records) attempts.push_back(r.attempt);
      const auto strat = curator::stratify(attempts);
      const auto picked = curator::sample_bin(strat, curator::parse_bin(bin_name), bin_k, bin_seed);
      if (picked.short_bin) {
        std::cerr << "warning: bin " << bin_name << " holds only " << picked.ids.size() << " problems (asked for "
                  << bin_k << "); returning all of them\n";
      }
      std::map<std::string, const curator::CuratedRecord*> by_id;
      for (const auto& r : data.records) by_id[r.problem.id] = &r;
      std::ofstream out(bin_out, std::ios::binary);
      json header = data.header;
      header["bin"] = bin_name;
      header["bin_seed"] = bin_seed;
      out << jsonl_line(json{{"header", header}});
      for (const auto& id : picked.ids) {
        const auto& r = *by_id.at(id);
        out << jsonl_line(json{{"problem", r.problem}, {"attempt_record", r.attempt}, {"difficulty_label", r.label}});
      }
    } else if (*sft_cmd) {
      sft_cfg.mask_prompt = !sft_no_mask;
      auto params = sft_init.empty() ? policy::PolicyParams(policy::Vocab::toy()) : policy::load_checkpoint(sft_init);
      const auto loaded =
          sft::make_examples(load_problems(sft_data), params.vocab(), params.prompt_buckets(), sft_max_seq);
      std::cerr << "loaded " << loaded.examples.size() << " examples (" << loaded.dropped_overlength
                << " over-length and " << loaded.dropped_untokenizable << " untokenizable dropped)\n";
      auto result = sft::sft_train(std::move(params), loaded.examples, sft_cfg);
      policy::save_checkpoint(result.params, sft_out);
      sft::write_loss_csv(sft_csv.empty() ? sft_out + ".loss.csv" : sft_csv, result.losses);
      if (!result.losses.empty()) std::cerr << "final loss " << result.losses.back() << "\n";
    } else if (*grpo_cmd) {
      auto params = grpo_init.empty() ? policy::PolicyParams(policy::Vocab::toy()) : policy::load_checkpoint(grpo_init);
      const auto data = curator::load_curated(grpo_data);
      const auto problems = grpo::make_problems(data, params.prompt_buckets());
      auto result = grpo::grpo_train(std::move(params), problems, grpo_cfg,
                                     [&](std::size_t step, const policy::PolicyParams& p) {
                                       policy::save_checkpoint(p, grpo_out + ".step" + std::to_string(step));
                                     });
      policy::save_checkpoint(result.params, grpo_out);
      grpo::write_metrics_csv(grpo_csv.empty() ? grpo_out + ".metrics.csv" : grpo_csv, result.metrics);
      if (!result.metrics.empty()) std::cerr << "final mean reward " << result.metrics.back().mean_reward << "\n";
    } else if (*eval_cmd) {
      const auto items = eval::load_items(eval_data);
      const auto be = eval_backend.build();
      eval_cfg.checkpoint_id = eval_backend.kind == "toy"
                                   ? (eval_backend.ckpt.empty() ? "zero" : BackendOptions::checkpoint_id(eval_backend.ckpt))
                                   : be->identity();
      const auto report = eval::evaluate(*be, items, eval_cfg);
      std::ofstream(eval_out, std::ios::binary) << eval::to_json(report).dump(2) << "\n";
      if (eval_md.empty()) {
        auto p = std::filesystem::path(eval_out);
        eval_md = (p.extension() == ".json" ? p.replace_extension(".md") : std::filesystem::path(eval_out + ".md")).string();
      }
      std::ofstream(eval_md, std::ios::binary) << eval::to_markdown(report);
      std::cerr << "accuracy " << report.accuracy << " (" << report.n_correct << "/" << report.n_problems << ")\n";
      if (!report.complete) {
        std::cerr << "error: " << report.error << "\n";
        return 3;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
