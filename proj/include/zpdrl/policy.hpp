#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zpdrl/rng.hpp"

namespace zpdrl::policy {

using TokenId = int;

/// Ordered token table with a single STOP token. Tokens may span several
/// characters (`\boxed{`, `<think>`); text is tokenized by longest match.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> tokens, std::string stop_token = "<stop>");

  /// Digits, arithmetic operators, think/box markers, lowercase letters and
  /// a little punctuation, with STOP last.
  static Vocab toy();

  std::size_t size() const { return tokens_.size(); }
  TokenId stop() const { return stop_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<TokenId> find(std::string_view symbol) const;

  /// Empty optional if some character cannot be covered by a token.
  std::optional<std::vector<TokenId>> tokenize(std::string_view text) const;
  /// Concatenates symbols; STOP renders as nothing.
  std::string detokenize(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_ && a.stop_ == b.stop_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t longest_ = 0;
  TokenId stop_ = 0;
};

inline constexpr std::size_t kPositionBuckets = 5;
inline constexpr std::size_t kPositionBucketWidth = 4;
inline constexpr std::size_t kDefaultPromptBuckets = 512;

std::size_t position_bucket(std::size_t position);

/// Maps prompt text to its hashed key in [0, buckets). Distinct prompts may
/// collide; the policy then shares their prompt row.
std::size_t prompt_key(std::string_view prompt, std::size_t buckets = kDefaultPromptBuckets);

/// Linear-softmax policy over one-hot features:
///   previous token (V rows) | position bucket (5 rows) | prompt key (K rows)
/// Each row holds V logit contributions; logits are the sum of the three
/// active rows. The first generated token sees STOP as its previous token.
class PolicyParams {
 public:
  explicit PolicyParams(Vocab vocab, std::size_t prompt_buckets = kDefaultPromptBuckets);

  const Vocab& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t prompt_buckets() const { return prompt_buckets_; }
  std::size_t rows() const { return vocab_.size() + kPositionBuckets + prompt_buckets_; }

  std::size_t prev_row(TokenId prev) const { return static_cast<std::size_t>(prev); }
  std::size_t position_row(std::size_t position) const { return vocab_.size() + position_bucket(position); }
  std::size_t key_row(std::size_t key) const { return vocab_.size() + kPositionBuckets + key; }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  double& at(std::size_t row, TokenId token) { return weights_[row * vocab_size() + static_cast<std::size_t>(token)]; }
  double at(std::size_t row, TokenId token) const {
    return weights_[row * vocab_size() + static_cast<std::size_t>(token)];
  }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.vocab_ == b.vocab_ && a.prompt_buckets_ == b.prompt_buckets_ && a.weights_ == b.weights_;
  }

 private:
  Vocab vocab_;
  std::size_t prompt_buckets_;
  std::vector<double> weights_;
};

/// Dense gradient laid out exactly like PolicyParams::weights().
using Gradient = std::vector<double>;

/// Throws std::out_of_range for an out-of-range key or previous token.
std::vector<double> logits(const PolicyParams& params, std::size_t key, TokenId prev, std::size_t position);

/// Numerically stable log-softmax.
std::vector<double> log_softmax(std::span<const double> z);

/// Per-position log-probabilities of `tokens` at temperature 1.
std::vector<double> token_logprobs(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens);

/// grad += sum_t coeffs[t] * d/dw log pi(tokens[t] | state_t). Positions with a
/// zero coefficient are skipped, so they never touch `grad`.
void accumulate_logprob_grad(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens,
                             std::span<const double> coeffs, Gradient& grad);

struct LogprobWithGrad {
  double logprob = 0.0;
  Gradient grad;
};

LogprobWithGrad sequence_logprob(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens);

struct Sample {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;  // temperature-1 log-probabilities
  bool truncated = false;
};

/// Ancestral sampling until STOP or max_len tokens. Temperature 0 is greedy
/// with ties broken toward the lowest token id.
Sample sample(const PolicyParams& params, std::size_t key, std::size_t max_len, double temperature, Rng& rng);

/// Binary checkpoint: magic line, JSON header (format version, V, K, vocab,
/// feature layout), then rows*V little-endian float64 weights.
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
/// Rejects non-finite weights and inconsistent headers.
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace zpdrl::policy
