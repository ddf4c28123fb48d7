#include <doctest.h>

#include <cmath>
#include <set>

#include "test_support.hpp"
#include "zpdrl/backend.hpp"
#include "zpdrl/sft.hpp"
#include "zpdrl/toy_task.hpp"

using namespace zpdrl;
using namespace zpdrl::sft;
using policy::PolicyParams;
using policy::TokenId;

namespace {

SftExample random_example(std::mt19937_64& rng, const PolicyParams& p) {
  SftExample ex;
  ex.prompt_key = rng() % p.prompt_buckets();
  ex.prompt_tokens = support::random_tokens(rng, p.vocab_size() - 1, 6);
  ex.response_tokens = support::random_tokens(rng, p.vocab_size() - 1, 12);
  ex.response_tokens.push_back(p.vocab().stop());
  return ex;
}

// Mean token NLL from the reference log-probability, prompt scored as its
// own prefix when unmasked.
double reference_loss(const PolicyParams& p, const std::vector<SftExample>& batch, bool mask) {
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    nll -= support::reference_logprob(p, ex.prompt_key, ex.response_tokens);
    tokens += ex.response_tokens.size();
    if (!mask) {
      nll -= support::reference_logprob(p, ex.prompt_key, ex.prompt_tokens);
      tokens += ex.prompt_tokens.size();
    }
  }
  return nll / static_cast<double>(tokens);
}

// Twenty toy problems with distinct prompt keys and memorizable traces.
std::vector<SftExample> memorizable_twenty() {
  const auto vocab = policy::Vocab::toy();
  const auto all = make_examples(toy::problems(toy::Split::sft, {}), vocab, policy::kDefaultPromptBuckets, 128);
  std::vector<SftExample> out;
  std::set<std::size_t> keys;
  for (const auto& ex : all.examples) {
    if (!toy::memorizable(vocab, ex.response_tokens) || !keys.insert(ex.prompt_key).second) continue;
    out.push_back(ex);
    if (out.size() == 20) break;
  }
  return out;
}

}  // namespace

TEST_CASE("loss is ln V at zero initialization") {
  PolicyParams p(policy::Vocab::toy());
  const auto ex = make_examples(toy::problems(toy::Split::sft, {}), p.vocab(), 512, 128).examples;
  const std::vector<SftExample> batch(ex.begin(), ex.begin() + 7);
  CHECK(sft_loss(p, batch).loss == doctest::Approx(std::log(48.0)).epsilon(1e-14));
  CHECK(sft_loss(p, batch, false).loss == doctest::Approx(std::log(48.0)).epsilon(1e-14));
}

TEST_CASE("loss agrees with the reference and its gradient with finite differences") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 25; ++i) {
    const auto p = support::random_params(rng, 0.8);
    std::vector<SftExample> batch;
    for (int b = 0; b < 3; ++b) batch.push_back(random_example(rng, p));
    for (bool mask : {true, false}) {
      const auto lg = sft_loss(p, batch, mask);
      CHECK(lg.loss == doctest::Approx(reference_loss(p, batch, mask)).epsilon(1e-12));
      CHECK(lg.loss >= 0);
      const auto check = support::finite_difference(
          p, [&](const PolicyParams& q) { return sft_loss(q, batch, mask).loss; }, lg.grad);
      CHECK(check.ok());
    }
  }
}

TEST_CASE("prompt tokens carry no loss when masked") {
  std::mt19937_64 rng(22);
  const auto p = support::random_params(rng);
  std::vector<SftExample> batch = {random_example(rng, p)};
  const double before = sft_loss(p, batch).loss;
  for (auto& t : batch[0].prompt_tokens) t = (t + 1) % 4;
  batch[0].prompt_tokens.push_back(2);
  CHECK(sft_loss(p, batch).loss == before);
}

TEST_CASE("responses must end with STOP and batches must be nonempty") {
  PolicyParams p(support::small_vocab(), 4);
  std::vector<SftExample> batch = {{0, {0}, {1, 2}}};
  CHECK_THROWS_AS(sft_loss(p, batch), std::invalid_argument);
  CHECK_THROWS_AS(sft_loss(p, std::vector<SftExample>{}), std::invalid_argument);
}

TEST_CASE("over-length and untokenizable examples are dropped and counted") {
  const auto v = policy::Vocab::toy();
  std::vector<Problem> ps = {
      {"a", "what is 1+2?", "3", std::nullopt, "t", std::string("<think>plus</think>\\boxed{3}")},
      {"b", "what is 1+2?", "3", std::nullopt, "t", std::string("Q")},
      {"c", std::string(200, 'a'), "3", std::nullopt, "t", std::string("\\boxed{3}")},
  };
  const auto loaded = make_examples(ps, v, 512, 128);
  CHECK(loaded.examples.size() == 1);
  CHECK(loaded.dropped_untokenizable == 1);
  CHECK(loaded.dropped_overlength == 1);
  CHECK(loaded.examples[0].response_tokens.back() == v.stop());
  ps[0].solution.reset();
  CHECK_THROWS(make_examples(ps, v, 512, 128));
}

TEST_CASE("zero steps leave parameters untouched and training is deterministic") {
  const auto data = memorizable_twenty();
  PolicyParams zero(policy::Vocab::toy());
  SftConfig cfg;
  CHECK(sft_train(zero, data, cfg).params == zero);
  cfg.steps = 50;
  cfg.learning_rate = 5;
  cfg.seed = 3;
  const auto a = sft_train(zero, data, cfg), b = sft_train(zero, data, cfg);
  CHECK(a.params == b.params);
  CHECK(a.losses == b.losses);
  cfg.seed = 4;
  CHECK_FALSE(sft_train(zero, data, cfg).params == a.params);
}

TEST_CASE("a single repeated example is memorized") {
  const auto data = memorizable_twenty();
  const std::vector<SftExample> one = {data[0]};
  SftConfig cfg;
  cfg.steps = 300;
  cfg.learning_rate = 5;
  const auto r = sft_train(PolicyParams(policy::Vocab::toy()), one, cfg);
  CHECK(r.losses.back() < 0.01);
}

TEST_CASE("twenty memorizable examples converge with a monotone trend") {
  const auto data = memorizable_twenty();
  REQUIRE(data.size() == 20);
  SftConfig cfg;
  cfg.steps = 2000;
  cfg.learning_rate = 5;
  const auto r = sft_train(PolicyParams(policy::Vocab::toy()), data, cfg);
  auto window = [&](std::size_t w) {
    double s = 0;
    for (std::size_t i = w * 100; i < (w + 1) * 100; ++i) s += r.losses[i];
    return s / 100;
  };
  CHECK(window(19) < 0.05);
  for (std::size_t w = 1; w < 20; ++w) CHECK(window(w) <= window(w - 1) * 1.05);

  // Greedy decoding now reproduces each trace and the toy backend answers it.
  const auto vocab = policy::Vocab::toy();
  Rng rng(0);
  for (const auto& ex : data) {
    const auto s = policy::sample(r.params, ex.prompt_key, 64, 0.0, rng);
    CHECK(s.tokens == ex.response_tokens);
    CHECK_FALSE(s.truncated);
  }
  std::set<std::pair<std::size_t, std::vector<TokenId>>> trained;
  for (const auto& ex : data) trained.emplace(ex.prompt_key, ex.response_tokens);
  const backend::ToyBackend be(r.params);
  int sevens = 0;
  for (const auto& p : toy::problems(toy::Split::sft, {})) {
    auto toks = *vocab.tokenize(*p.solution);
    toks.push_back(vocab.stop());
    if (trained.count({policy::prompt_key(p.prompt), toks}) == 0) continue;
    const auto out = be.generate({"", p.prompt, 3, 64, 0.0, 1});
    REQUIRE(out.texts.size() == 3);
    CHECK(out.texts[0] == out.texts[1]);
    CHECK(out.texts[0] == out.texts[2]);
    CHECK(out.texts[0].ends_with("\\boxed{" + p.gold + "}"));
    for (auto f : out.finish_reasons) CHECK(f == backend::FinishReason::stop);
    sevens += p.gold == "7";
  }
  CHECK(sevens > 0);
}

TEST_CASE("loss history is written as CSV") {
  support::TempDir dir("zpdrl-sft");
  write_loss_csv(dir / "l.csv", std::vector<double>{0.5, 0.25});
  CHECK(support::slurp(dir / "l.csv") == "step,loss\n1,0.5\n2,0.25\n");
}
