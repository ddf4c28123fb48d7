#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zpdrl/policy.hpp"

namespace zpdrl::backend {

struct GenRequest {
  std::string system_prompt;
  std::string user_prompt;
  std::size_t n = 1;
  std::size_t max_tokens = 64;
  double temperature = 1.0;
  std::optional<std::uint64_t> seed;

  /// Throws std::invalid_argument unless n >= 1, max_tokens >= 1, temperature >= 0.
  void validate() const;
};

enum class FinishReason { stop, length };

std::string to_string(FinishReason reason);

struct GenResponse {
  std::vector<std::string> texts;
  std::vector<FinishReason> finish_reasons;
};

/// Raised once a backend has exhausted its retry budget.
class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generation interface shared by curation and evaluation. Implementations
/// must be callable concurrently from several threads.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns exactly request.n completions.
  virtual GenResponse generate(const GenRequest& request) const = 0;
  /// Scorer identity recorded in curated-file headers.
  virtual std::string identity() const = 0;
  /// Suggested number of concurrent callers.
  virtual std::size_t max_in_flight() const { return 1; }
};

/// Samples from an immutable snapshot of the toy policy. The user prompt
/// selects the prompt key; the system prompt is accepted and ignored since
/// the policy has no text encoder. Completion i of a request uses an RNG
/// seeded from (request seed, i), so results are reproducible and
/// independent of call order.
class ToyBackend final : public Backend {
 public:
  explicit ToyBackend(policy::PolicyParams params, std::string name = "toy-policy");

  GenResponse generate(const GenRequest& request) const override;
  std::string identity() const override { return name_; }
  std::size_t max_in_flight() const override { return 1; }
  const policy::PolicyParams& params() const { return *params_; }

 private:
  std::shared_ptr<const policy::PolicyParams> params_;
  std::string name_;
};

struct HttpConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model;
  /// Name of the environment variable holding the bearer token; unset or
  /// empty variable means no Authorization header.
  std::string api_key_env = "ZPDRL_API_KEY";
  std::string auth_header = "Authorization";
  double timeout_secs = 120.0;
  int max_retries = 4;
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::milliseconds max_backoff{8000};
};

/// Chat-completion client: POSTs
///   {"model", "messages": [{"role":"system",...},{"role":"user",...}],
///    "n", "max_tokens", "temperature", "seed"?}
/// and reads choices[i].message.content / choices[i].finish_reason.
/// Transport errors, non-2xx statuses and malformed payloads are retried
/// with exponential backoff, then reported as BackendUnavailable.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);

  GenResponse generate(const GenRequest& request) const override;
  std::string identity() const override;
  std::size_t max_in_flight() const override { return config_.max_in_flight; }

  /// Exposed for tests: the exact request body sent for `request`.
  std::string request_body(const GenRequest& request) const;

 private:
  HttpConfig config_;
  std::optional<std::string> api_key_;
};

}  // namespace zpdrl::backend
