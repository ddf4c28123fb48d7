#pragma once
// Helpers shared by the unit tests and the acceptance runner: small random
// policies, an independent log-probability reference and central finite
// differences.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "zpdrl/backend.hpp"
#include "zpdrl/dataset.hpp"
#include "zpdrl/policy.hpp"
#include "zpdrl/rng.hpp"

namespace support {

using zpdrl::policy::PolicyParams;
using zpdrl::policy::TokenId;
using zpdrl::policy::Vocab;

inline Vocab small_vocab() { return Vocab({"a", "b", "c", "d", "<stop>"}); }

inline PolicyParams random_params(std::mt19937_64& rng, double scale = 1.0, std::size_t buckets = 8,
                                  Vocab vocab = small_vocab()) {
  PolicyParams p(std::move(vocab), buckets);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& w : p.weights()) w = n(rng);
  return p;
}

// Written from the feature definition alone: logit(v) = W[prev][v] +
// W[V + bucket(t)][v] + W[V + 5 + key][v], prev = STOP at t = 0.
inline double reference_logprob(const PolicyParams& p, std::size_t key, const std::vector<TokenId>& tokens) {
  const std::size_t V = p.vocab_size();
  const auto w = p.weights();
  double total = 0.0;
  TokenId prev = p.vocab().stop();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t bucket = std::min<std::size_t>(t / 4, 4);
    const std::size_t rows[3] = {static_cast<std::size_t>(prev), V + bucket, V + 5 + key};
    std::vector<double> z(V, 0.0);
    for (std::size_t r : rows)
      for (std::size_t v = 0; v < V; ++v) z[v] += w[r * V + v];
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double x : z) s += std::exp(x - m);
    total += z[static_cast<std::size_t>(tokens[t])] - m - std::log(s);
    prev = tokens[t];
  }
  return total;
}

// d/dw log pi(tokens), accumulated with `weight` into grad, from the same
// feature definition: for each active row r, dlogpi/dW[r][v] = [v = y] - p(v).
inline void reference_logprob_grad(const PolicyParams& p, std::size_t key, const std::vector<TokenId>& tokens,
                                   double weight, std::vector<double>& grad) {
  const std::size_t V = p.vocab_size();
  const auto w = p.weights();
  TokenId prev = p.vocab().stop();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t bucket = std::min<std::size_t>(t / 4, 4);
    const std::size_t rows[3] = {static_cast<std::size_t>(prev), V + bucket, V + 5 + key};
    std::vector<double> z(V, 0.0);
    for (std::size_t r : rows)
      for (std::size_t v = 0; v < V; ++v) z[v] += w[r * V + v];
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double& x : z) s += (x = std::exp(x - m));
    for (std::size_t r : rows) {
      for (std::size_t v = 0; v < V; ++v) {
        const double indicator = static_cast<std::size_t>(tokens[t]) == v ? 1.0 : 0.0;
        grad[r * V + v] += weight * (indicator - z[v] / s);
      }
    }
    prev = tokens[t];
  }
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t V, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> tok(0, static_cast<int>(V) - 1);
  std::vector<TokenId> out(len(rng));
  for (auto& t : out) t = tok(rng);
  return out;
}

struct GradCheck {
  double worst_relative = 0.0;
  double worst_absolute_small = 0.0;
  std::size_t checked = 0;
  bool ok(double rel_tol = 1e-5, double abs_tol = 1e-8) const {
    return worst_relative < rel_tol && worst_absolute_small < abs_tol;
  }
};

// Compares `analytic` to central differences of f over every weight.
// Coordinates with a gradient of at least 1e-3 are held to a relative
// bound; the rest to an absolute one.
inline GradCheck finite_difference(PolicyParams params, const std::function<double(const PolicyParams&)>& f,
                                   const std::vector<double>& analytic, double h = 1e-5) {
  GradCheck out;
  auto w = params.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double up = f(params);
    w[i] = saved - h;
    const double down = f(params);
    w[i] = saved;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    const double err = std::abs(fd - analytic[i]);
    if (scale >= 1e-3) {
      out.worst_relative = std::max(out.worst_relative, err / scale);
      ++out.checked;
    } else {
      out.worst_absolute_small = std::max(out.worst_absolute_small, err);
    }
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Each attempt independently answers the gold "1" with probability p.
class BernoulliBackend final : public zpdrl::backend::Backend {
 public:
  explicit BernoulliBackend(double p) : p_(p) {}
  zpdrl::backend::GenResponse generate(const zpdrl::backend::GenRequest& r) const override {
    r.validate();
    zpdrl::backend::GenResponse out;
    for (std::size_t i = 0; i < r.n; ++i) {
      zpdrl::Rng rng(zpdrl::derive_seed(r.seed.value_or(0), i));
      out.texts.push_back(zpdrl::uniform01(rng) < p_ ? "<think>ok</think>\\boxed{1}" : "<think>no</think>\\boxed{2}");
      out.finish_reasons.push_back(zpdrl::backend::FinishReason::stop);
    }
    return out;
  }
  std::string identity() const override { return "bernoulli:" + std::to_string(p_); }
  std::size_t max_in_flight() const override { return 4; }

 private:
  double p_;
};

inline std::vector<zpdrl::Problem> unit_problems(std::size_t count, const std::string& prefix = "q") {
  std::vector<zpdrl::Problem> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = prefix + std::to_string(i);
    out.push_back({id, "problem " + id, "1", std::nullopt, "mock", std::nullopt});
  }
  return out;
}

}  // namespace support
