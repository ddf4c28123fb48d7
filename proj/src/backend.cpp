#include "zpdrl/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace zpdrl::backend {

using nlohmann::json;

void GenRequest::validate() const {
  if (n < 1) throw std::invalid_argument("GenRequest.n must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("GenRequest.max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("GenRequest.temperature must be >= 0");
}

std::string to_string(FinishReason reason) { return reason == FinishReason::stop ? "stop" : "length"; }

ToyBackend::ToyBackend(policy::PolicyParams params, std::string name)
    : params_(std::make_shared<const policy::PolicyParams>(std::move(params))), name_(std::move(name)) {}

GenResponse ToyBackend::generate(const GenRequest& request) const {
  request.validate();
  const std::size_t key = policy::prompt_key(request.user_prompt, params_->prompt_buckets());
  const std::uint64_t base = request.seed.value_or(0);
  GenResponse out;
  out.texts.reserve(request.n);
  out.finish_reasons.reserve(request.n);
  for (std::size_t i = 0; i < request.n; ++i) {
    Rng rng(derive_seed(base, i));
    const auto s = policy::sample(*params_, key, request.max_tokens, request.temperature, rng);
    out.texts.push_back(params_->vocab().detokenize(s.tokens));
    out.finish_reasons.push_back(s.truncated ? FinishReason::length : FinishReason::stop);
  }
  return out;
}

namespace {

struct Attempt {
  std::optional<GenResponse> response;
  std::string error;
};

Attempt parse_completion(const std::string& body, std::size_t n) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    return {std::nullopt, std::string("malformed JSON payload: ") + e.what()};
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array()) {
    return {std::nullopt, "payload lacks a choices array"};
  }
  const auto& choices = j["choices"];
  if (choices.size() != n) {
    return {std::nullopt, "expected " + std::to_string(n) + " choices, got " + std::to_string(choices.size())};
  }
  GenResponse out;
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const auto& c = choices[i];
    const auto* content = c.contains("message") && c["message"].is_object() && c["message"].contains("content")
                              ? &c["message"]["content"]
                              : nullptr;
    if (content == nullptr || !(content->is_string() || content->is_null())) {
      return {std::nullopt, "choice " + std::to_string(i) + " has no message.content"};
    }
    out.texts.push_back(content->is_null() ? std::string{} : content->get<std::string>());
    const std::string finish = c.value("finish_reason", json(nullptr)).is_string() ? c["finish_reason"].get<std::string>() : "stop";
    out.finish_reasons.push_back(finish == "length" ? FinishReason::length : FinishReason::stop);
    order.emplace_back(c.value("index", i), i);
  }
  // Servers may return choices out of index order.
  std::sort(order.begin(), order.end());
  GenResponse sorted;
  for (auto [index, pos] : order) {
    sorted.texts.push_back(std::move(out.texts[pos]));
    sorted.finish_reasons.push_back(out.finish_reasons[pos]);
  }
  return {std::move(sorted), {}};
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (config_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') api_key_ = key;
  }
}

std::string HttpBackend::identity() const { return "http:" + config_.base_url + config_.path + "#" + config_.model; }

std::string HttpBackend::request_body(const GenRequest& request) const {
  json body = {
      {"model", config_.model},
      {"messages",
       json::array({{{"role", "system"}, {"content", request.system_prompt}},
                    {{"role", "user"}, {"content", request.user_prompt}}})},
      {"n", request.n},
      {"max_tokens", request.max_tokens},
      {"temperature", request.temperature},
  };
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

GenResponse HttpBackend::generate(const GenRequest& request) const {
  request.validate();
  const std::string body = request_body(request);
  httplib::Client client(config_.base_url);
  const auto secs = static_cast<time_t>(config_.timeout_secs);
  const auto usecs = static_cast<time_t>((config_.timeout_secs - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (api_key_) headers.emplace(config_.auth_header, "Bearer " + *api_key_);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, config_.max_backoff);
    }
    auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    auto parsed = parse_completion(res->body, request.n);
    if (parsed.response) return std::move(*parsed.response);
    last_error = parsed.error;
  }
  throw BackendUnavailable(identity() + " unavailable after " + std::to_string(config_.max_retries + 1) +
                           " attempts: " + last_error);
}

}  // namespace zpdrl::backend
