#include <doctest.h>

#include <map>
#include <set>

#include "zpdrl/toy_task.hpp"
#include "zpdrl/verifier.hpp"

using namespace zpdrl;
using namespace zpdrl::toy;

TEST_CASE("prompts, traces and answers") {
  CHECK(prompt_text(3, Op::add, 4) == "what is 3+4?");
  CHECK(prompt_text(3, Op::mul, 4) == "what is 3×4?");
  CHECK(solution_text(3, Op::mul, 4) == "<think>times</think>\\boxed{12}");
  CHECK(answer(9, Op::mul, 9) == 81);
}

TEST_CASE("splits partition the problems by prompt key") {
  ToyTaskConfig cfg;
  std::set<std::string> ids;
  std::map<Split, std::set<std::size_t>> keys;
  std::size_t total = 0;
  for (Split s : {Split::sft, Split::rl, Split::eval}) {
    const auto ps = problems(s, cfg);
    CHECK_FALSE(ps.empty());
    total += ps.size();
    for (const auto& p : ps) {
      CHECK(ids.insert(p.id).second);
      keys[s].insert(policy::prompt_key(p.prompt, cfg.prompt_buckets));
      CHECK(split_of_key(policy::prompt_key(p.prompt, cfg.prompt_buckets), cfg) == s);
      REQUIRE(p.solution.has_value());
      CHECK(verifier::reward(*p.solution, p.gold).reward == 1.0);
    }
  }
  CHECK(total == 2 * 9 * 9);
  for (std::size_t k : keys[Split::eval]) {
    CHECK(keys[Split::sft].count(k) == 0);
    CHECK(keys[Split::rl].count(k) == 0);
  }
}

TEST_CASE("split assignment depends on the split seed") {
  ToyTaskConfig a, b;
  b.split_seed = 1;
  CHECK(problems(Split::eval, a).size() + problems(Split::eval, b).size() > 0);
  bool differs = false;
  for (std::size_t k = 0; k < 64; ++k) differs |= split_of_key(k, a) != split_of_key(k, b);
  CHECK(differs);
}

TEST_CASE("traces are memorizable unless the answer repeats a digit") {
  // A repeated digit asks for two different next tokens from the same
  // (previous token, position bucket) state.
  const auto v = policy::Vocab::toy();
  for (Split s : {Split::sft, Split::rl, Split::eval}) {
    for (const auto& p : problems(s, {})) {
      auto toks = v.tokenize(*p.solution);
      REQUIRE(toks.has_value());
      toks->push_back(v.stop());
      const bool repeated = p.gold.size() == 2 && p.gold[0] == p.gold[1];
      CHECK(memorizable(v, *toks) == !repeated);
    }
  }
  CHECK_FALSE(memorizable(v, *v.tokenize("aaab")));
}

TEST_CASE("split names parse") {
  CHECK(parse_split("rl") == Split::rl);
  CHECK(to_string(Split::eval) == "eval");
  CHECK_THROWS(parse_split("train"));
}
