#include "zpdrl/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace zpdrl::policy {

namespace {

constexpr std::string_view kMagic = "ZPDRL-CKPT\n";
constexpr int kFormatVersion = 1;

void check_token(const PolicyParams& params, TokenId t) {
  if (t < 0 || static_cast<std::size_t>(t) >= params.vocab_size()) {
    throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
  }
}

void check_key(const PolicyParams& params, std::size_t key) {
  if (key >= params.prompt_buckets()) throw std::out_of_range("prompt key " + std::to_string(key) + " out of range");
}

// Writes the temperature-1 logits for the state into `out`.
void fill_logits(const PolicyParams& params, std::size_t key, TokenId prev, std::size_t position,
                 std::span<double> out) {
  const std::size_t v = params.vocab_size();
  const auto w = params.weights();
  const double* a = w.data() + params.prev_row(prev) * v;
  const double* b = w.data() + params.position_row(position) * v;
  const double* c = w.data() + params.key_row(key) * v;
  for (std::size_t j = 0; j < v; ++j) out[j] = a[j] + b[j] + c[j];
}

void softmax_in_place(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens, std::string stop_token) : tokens_(std::move(tokens)) {
  bool have_stop = false;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) throw std::invalid_argument("empty token symbol");
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) throw std::invalid_argument("duplicate token '" + t + "'");
    if (t == stop_token) {
      have_stop = true;
      stop_ = static_cast<TokenId>(i);
    } else {
      longest_ = std::max(longest_, t.size());
    }
  }
  if (!have_stop) throw std::invalid_argument("vocabulary lacks the stop token '" + stop_token + "'");
}

Vocab Vocab::toy() {
  std::vector<std::string> t;
  for (char c = '0'; c <= '9'; ++c) t.emplace_back(1, c);
  for (const char* s : {"+", "-", "×", "=", "<think>", "</think>", "\\boxed{", "}", " ", "?", "."}) t.emplace_back(s);
  for (char c = 'a'; c <= 'z'; ++c) t.emplace_back(1, c);
  t.emplace_back("<stop>");
  return Vocab(std::move(t));
}

std::optional<TokenId> Vocab::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::vector<TokenId>> Vocab::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_, text.size() - pos); len > 0; --len) {
      auto it = index_.find(std::string(text.substr(pos, len)));
      if (it != index_.end() && it->second != stop_) {
        out.push_back(it->second);
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) return std::nullopt;
  }
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id != stop_) out += token(id);
  }
  return out;
}

std::size_t position_bucket(std::size_t position) {
  return std::min(position / kPositionBucketWidth, kPositionBuckets - 1);
}

std::size_t prompt_key(std::string_view prompt, std::size_t buckets) { return fnv1a64(prompt) % buckets; }

PolicyParams::PolicyParams(Vocab vocab, std::size_t prompt_buckets)
    : vocab_(std::move(vocab)), prompt_buckets_(prompt_buckets) {
  if (prompt_buckets_ == 0) throw std::invalid_argument("prompt bucket count must be positive");
  weights_.assign(rows() * vocab_.size(), 0.0);
}

std::vector<double> logits(const PolicyParams& params, std::size_t key, TokenId prev, std::size_t position) {
  check_token(params, prev);
  check_key(params, key);
  std::vector<double> out(params.vocab_size());
  fill_logits(params, key, prev, position, out);
  return out;
}

std::vector<double> log_softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

std::vector<double> token_logprobs(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens) {
  check_key(params, key);
  std::vector<double> out;
  out.reserve(tokens.size());
  std::vector<double> z(params.vocab_size());
  TokenId prev = params.vocab().stop();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    check_token(params, tokens[t]);
    fill_logits(params, key, prev, t, z);
    out.push_back(log_softmax(z)[static_cast<std::size_t>(tokens[t])]);
    prev = tokens[t];
  }
  return out;
}

void accumulate_logprob_grad(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens,
                             std::span<const double> coeffs, Gradient& grad) {
  if (coeffs.size() != tokens.size()) throw std::invalid_argument("coefficient count must match token count");
  if (grad.size() != params.weights().size()) throw std::invalid_argument("gradient has the wrong shape");
  check_key(params, key);
  const std::size_t v = params.vocab_size();
  std::vector<double> p(v);
  TokenId prev = params.vocab().stop();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    check_token(params, tokens[t]);
    const double c = coeffs[t];
    if (c != 0.0) {
      fill_logits(params, key, prev, t, p);
      softmax_in_place(p);
      for (std::size_t row : {params.prev_row(prev), params.position_row(t), params.key_row(key)}) {
        double* g = grad.data() + row * v;
        for (std::size_t j = 0; j < v; ++j) g[j] -= c * p[j];
        g[static_cast<std::size_t>(tokens[t])] += c;
      }
    }
    prev = tokens[t];
  }
}

LogprobWithGrad sequence_logprob(const PolicyParams& params, std::size_t key, std::span<const TokenId> tokens) {
  LogprobWithGrad out;
  for (double lp : token_logprobs(params, key, tokens)) out.logprob += lp;
  out.grad.assign(params.weights().size(), 0.0);
  const std::vector<double> ones(tokens.size(), 1.0);
  accumulate_logprob_grad(params, key, tokens, ones, out.grad);
  return out;
}

Sample sample(const PolicyParams& params, std::size_t key, std::size_t max_len, double temperature, Rng& rng) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be non-negative");
  check_key(params, key);
  const std::size_t v = params.vocab_size();
  const TokenId stop = params.vocab().stop();
  Sample out;
  std::vector<double> z(v);
  std::vector<double> q(v);
  TokenId prev = stop;
  for (std::size_t t = 0; t < max_len; ++t) {
    fill_logits(params, key, prev, t, z);
    const auto lp = log_softmax(z);
    TokenId next = 0;
    if (temperature == 0.0) {
      next = static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
    } else {
      for (std::size_t j = 0; j < v; ++j) q[j] = z[j] / temperature;
      softmax_in_place(q);
      const double u = uniform01(rng);
      double acc = 0.0;
      next = static_cast<TokenId>(v - 1);
      for (std::size_t j = 0; j < v; ++j) {
        acc += q[j];
        if (u < acc) {
          next = static_cast<TokenId>(j);
          break;
        }
      }
    }
    out.tokens.push_back(next);
    out.logprobs.push_back(lp[static_cast<std::size_t>(next)]);
    if (next == stop) return out;
    prev = next;
  }
  out.truncated = true;
  return out;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  nlohmann::json header = {
      {"format", "zpdrl-linear-softmax"},
      {"version", kFormatVersion},
      {"vocab_size", params.vocab_size()},
      {"prompt_buckets", params.prompt_buckets()},
      {"position_buckets", kPositionBuckets},
      {"position_bucket_width", kPositionBucketWidth},
      {"feature_layout", {"prev_token", "position_bucket", "prompt_key"}},
      {"vocab", params.vocab().tokens()},
      {"stop_token", params.vocab().token(params.vocab().stop())},
      {"dtype", "float64-le"},
  };
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kMagic << h << '\n';
  std::string buf(params.weights().size() * 8, '\0');
  std::size_t k = 0;
  for (double w : params.weights()) {
    const auto bits = std::bit_cast<std::uint64_t>(w);
    for (int b = 0; b < 8; ++b) buf[k++] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic(kMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw std::runtime_error(path.string() + " is not a policy checkpoint");
  std::string header_line;
  std::getline(in, header_line);
  const auto header = nlohmann::json::parse(header_line);
  if (header.at("version").get<int>() != kFormatVersion) throw std::runtime_error("unsupported checkpoint version");
  if (header.at("position_buckets").get<std::size_t>() != kPositionBuckets ||
      header.at("position_bucket_width").get<std::size_t>() != kPositionBucketWidth) {
    throw std::runtime_error("checkpoint feature layout differs from this build");
  }
  Vocab vocab(header.at("vocab").get<std::vector<std::string>>(), header.at("stop_token").get<std::string>());
  if (vocab.size() != header.at("vocab_size").get<std::size_t>()) throw std::runtime_error("vocab size mismatch");
  PolicyParams params(std::move(vocab), header.at("prompt_buckets").get<std::size_t>());
  auto w = params.weights();
  std::string buf(w.size() * 8, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw std::runtime_error("truncated checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in checkpoint");
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
    const double x = std::bit_cast<double>(bits);
    if (!std::isfinite(x)) throw std::runtime_error("non-finite weight at index " + std::to_string(i));
    w[i] = x;
  }
  return params;
}

}  // namespace zpdrl::policy
