#include <doctest.h>

#include <fstream>
#include <map>

#include "test_support.hpp"
#include "zpdrl/curator.hpp"
#include "zpdrl/eval.hpp"
#include "zpdrl/grpo.hpp"
#include "zpdrl/sft.hpp"
#include "zpdrl/toy_task.hpp"

using namespace zpdrl;
using namespace zpdrl::eval;

namespace {

// Answers with the gold taken from a lookup, optionally never boxing, and
// optionally failing on one prompt.
class LookupBackend final : public backend::Backend {
 public:
  LookupBackend(std::map<std::string, std::string> answers, bool box, std::string fail_on = "")
      : answers_(std::move(answers)), box_(box), fail_on_(std::move(fail_on)) {}
  backend::GenResponse generate(const backend::GenRequest& r) const override {
    if (r.system_prompt != system_prompt()) throw std::logic_error("wrong system prompt");
    if (r.temperature != 0.0 || r.n != 1) throw std::logic_error("evaluation must be greedy and single-sample");
    if (!fail_on_.empty() && r.user_prompt == fail_on_) throw backend::BackendUnavailable("down");
    const auto& a = answers_.at(r.user_prompt);
    return {{box_ ? "<think>x</think>\\boxed{" + a + "}" : a}, {backend::FinishReason::stop}};
  }
  std::string identity() const override { return "lookup"; }

 private:
  std::map<std::string, std::string> answers_;
  bool box_;
  std::string fail_on_;
};

std::vector<EvalItem> labeled_items(std::size_t n) {
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    const int tier = 1 + static_cast<int>(i % 15);
    items.push_back({{"p" + std::to_string(i), "prompt " + std::to_string(i), std::to_string(i), std::nullopt, "s",
                      std::nullopt},
                     curator::DifficultyLabel{tier, curator::bin_for_tier(tier)}});
  }
  return items;
}

std::map<std::string, std::string> answers_for(const std::vector<EvalItem>& items, std::size_t wrong_every = 0) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out[items[i].problem.prompt] = wrong_every != 0 && i % wrong_every == 0 ? "wrong" : items[i].problem.gold;
  }
  return out;
}

}  // namespace

TEST_CASE("system prompt matches the golden file byte for byte") {
  const auto golden = support::slurp(std::filesystem::path(ZPDRL_GOLDEN_DIR) / "system_prompt.txt");
  REQUIRE_FALSE(golden.empty());
  const auto p = build_prompt({"x", "what is 2+2?", "4", std::nullopt, "s", std::nullopt});
  CHECK(p.system == golden);
  CHECK(p.system.find("MUST BE enclosed within <think></think> tags") != std::string::npos);
  CHECK(p.system.find("MUST BE put in \\boxed{}") != std::string::npos);
  CHECK(p.user == "what is 2+2?");
  const auto empty = build_prompt({"y", "", "4", std::nullopt, "s", std::nullopt});
  CHECK(empty.user.empty());
  CHECK(empty.system == golden);
}

TEST_CASE("an always-correct backend scores 1 and a never-boxing one 0") {
  const auto items = labeled_items(30);
  const auto right = evaluate(LookupBackend(answers_for(items), true), items, {});
  CHECK(right.accuracy == 1.0);
  CHECK(right.complete);
  const auto unboxed = evaluate(LookupBackend(answers_for(items), false), items, {});
  CHECK(unboxed.accuracy == 0.0);
  CHECK(unboxed.n_problems == 30);
}

TEST_CASE("tier and bin cells partition the problems") {
  const auto items = labeled_items(47);
  EvalConfig cfg;
  cfg.workers = 3;
  const auto r = evaluate(LookupBackend(answers_for(items, 4), true), items, cfg);
  std::size_t n = 0, correct = 0;
  for (const auto& [tier, cell] : r.per_tier) {
    n += cell.n;
    correct += cell.correct;
  }
  CHECK(n == r.n_problems);
  CHECK(static_cast<double>(correct) / static_cast<double>(n) == r.accuracy);
  std::size_t bn = 0;
  for (const auto& [bin, cell] : r.per_bin) bn += cell.n;
  CHECK(bn == r.n_problems);
  CHECK(r.n_correct == 47 - 12);

  const auto md = to_markdown(r);
  CHECK(md.find("| Bin | Size | Accuracy |") != std::string::npos);
  CHECK(md.find("| Hard | 17 |") != std::string::npos);
  const auto j = to_json(r);
  CHECK(j["per_tier"]["1"]["n"] == 4);
  CHECK(j["n_correct"] == 35);
}

TEST_CASE("a backend failure yields a partial report") {
  const auto items = labeled_items(10);
  const auto r = evaluate(LookupBackend(answers_for(items), true, "prompt 6"), items, {});
  CHECK_FALSE(r.complete);
  CHECK(r.n_problems == 6);
  CHECK(r.error.find("p6") != std::string::npos);
  CHECK(to_json(r)["complete"] == false);
}

TEST_CASE("items load from plain and curated files") {
  support::TempDir dir("zpdrl-eval");
  write_problems(dir / "plain.jsonl", support::unit_problems(3));
  const auto plain = load_items(dir / "plain.jsonl");
  REQUIRE(plain.size() == 3);
  CHECK_FALSE(plain[0].label.has_value());

  support::BernoulliBackend be(0.5);
  curator::CurateOptions opt;
  opt.timestamp = "t";
  curator::curate(support::unit_problems(40), be, dir / "cur.jsonl", opt);
  const auto curated = load_items(dir / "cur.jsonl");
  REQUIRE_FALSE(curated.empty());
  CHECK(curated[0].label.has_value());
}

TEST_CASE("SFT then GRPO beats the zero policy on the held-out split") {
  const policy::PolicyParams zero(policy::Vocab::toy());
  const auto sft_ex = sft::make_examples(toy::problems(toy::Split::sft, {}), zero.vocab(), 512, 128).examples;
  sft::SftConfig scfg;
  scfg.steps = 1000;
  scfg.learning_rate = 5;
  const auto warm = sft::sft_train(zero, sft_ex, scfg).params;

  const backend::ToyBackend scorer(warm);
  std::vector<grpo::GrpoProblem> rl;
  for (const auto& p : toy::problems(toy::Split::rl, {})) {
    const auto rec = curator::score_problem(p, scorer, 16, {});
    if (rec.success_count == 0 || rec.success_count == 16) continue;
    rl.push_back({p.id, p.prompt, policy::prompt_key(p.prompt), *verifier::parse_answer(p.gold)});
  }
  REQUIRE_FALSE(rl.empty());
  grpo::GrpoConfig gcfg;
  gcfg.learning_rate = 40;
  const auto trained = grpo::grpo_train(warm, rl, gcfg).params;

  std::vector<EvalItem> held_out;
  for (const auto& p : toy::problems(toy::Split::eval, {})) held_out.push_back({p, std::nullopt});
  const auto before = trained;
  const auto ours = evaluate(backend::ToyBackend(trained), held_out, {});
  const auto base = evaluate(backend::ToyBackend(zero), held_out, {});
  CHECK(trained == before);
  MESSAGE("held-out accuracy " << ours.accuracy << " vs zero policy " << base.accuracy);
  CHECK(ours.accuracy > base.accuracy);
}
