#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "spirit/common.hpp"

namespace spirit {

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.7;
  int max_output = 4096;
  std::string tag;

  bool operator==(const ChatRequest&) const = default;
};

enum class BackendKind { http_openai_compatible, mock };

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string endpoint;          // http kind only, e.g. "http://localhost:8000/v1"
  std::string model_name = "mock";
  std::uint64_t seed = 0;        // mock kind only
  double rate_limit = 0.0;       // requests per second, 0 = unlimited
  std::string api_key_env;       // name of the env var holding the key
  double timeout_seconds = 120.0;
  double painter_temperature = 0.7;
  double reasoner_temperature = 0.7;
  bool feedback_on_retry = false;
  int max_transport_retries = 3;
  Json mock = Json::object();    // mock settings: {"type": "script"|"marker", ...}

  /// "<model_name>#<hash of the full config>"; identifies cached paints.
  std::string fingerprint() const;
};

BackendConfig backend_config_from_json(const Json& j);
Json to_json(const BackendConfig& cfg);
BackendConfig load_backend_config(const std::filesystem::path& file);

/// Throws UsageError when an http backend lacks a well-formed endpoint.
void check_backend_config(const BackendConfig& cfg);

/// Retryable: connection failures, throttling, 5xx.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Non-retryable: the backend answered but will not serve this request.
class BackendRefusal : public BackendError {
 public:
  using BackendError::BackendError;
};

struct Completion {
  std::string text;
  std::optional<std::int64_t> input_tokens;   // from backend usage data when reported
  std::optional<std::int64_t> output_tokens;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion complete(const ChatRequest& req) = 0;
  virtual std::string fingerprint() const = 0;
};

/// Token estimate when the backend omits usage: whitespace-delimited words.
std::int64_t approx_tokens(std::string_view text);

struct GenerationReceipt {
  int attempts = 1;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::string final_text;

  bool operator==(const GenerationReceipt&) const = default;
};

/// One call; receipt.attempts == 1.
GenerationReceipt complete(const ChatRequest& req, ChatBackend& backend);

/// Token bucket shared by concurrent callers; acquire() blocks until a slot frees.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second, double burst = 1.0);
  void acquire();
  bool unlimited() const { return per_second_ <= 0.0; }

 private:
  using SteadyClock = std::chrono::steady_clock;
  double per_second_;
  double burst_;
  double tokens_;
  SteadyClock::time_point last_;
  std::mutex mutex_;
};

/// OpenAI-compatible `POST <endpoint>/chat/completions`.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendConfig cfg);
  Completion complete(const ChatRequest& req) override;
  std::string fingerprint() const override { return cfg_.fingerprint(); }

  static Json request_body(const BackendConfig& cfg, const ChatRequest& req);
  static Completion parse_response(const std::string& body);

 private:
  BackendConfig cfg_;
  RateLimiter limiter_;
};

/// Deterministic scripted backend. Rules are tried in order; the first whose
/// `match` substring occurs in "<system>\n<user>" answers. The n-th identical
/// request gets responses[min(n, size-1)], so retries walk the script while
/// concurrent users stay independent. No match is a BackendRefusal.
///
/// Settings: {"type": "script", "rules": [{"match": "...", "responses": ["..."]}]}.
/// The placeholder "{{request_hash}}" expands to a hash of (seed, request).
class ScriptedMockBackend final : public ChatBackend {
 public:
  struct Rule {
    std::string match;
    std::vector<std::string> responses;
  };
  struct LogEntry {
    std::size_t rule;
    std::size_t response;
    std::string tag;
  };

  ScriptedMockBackend(std::vector<Rule> rules, std::uint64_t seed = 0, std::string model_name = "mock");
  static std::unique_ptr<ScriptedMockBackend> from_config(const BackendConfig& cfg);

  Completion complete(const ChatRequest& req) override;
  std::string fingerprint() const override;

  std::vector<LogEntry> log() const;
  std::size_t calls() const;

 private:
  std::vector<Rule> rules_;
  std::uint64_t seed_;
  std::string model_name_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::size_t> seen_;
  std::vector<LogEntry> log_;
};

std::uint64_t request_hash(const ChatRequest& req, std::uint64_t seed);

struct RetryPolicy {
  int max_attempts = 10;
  bool feedback_on_retry = false;
  int max_transport_retries = 3;
  std::chrono::milliseconds transport_backoff{250};

  static RetryPolicy from(const BackendConfig& cfg, int max_attempts = 10);
};

/// Every attempt failed validation.
class StructuredFailure : public BackendError {
 public:
  StructuredFailure(int attempts, std::vector<Violation> last_violations, std::string last_text,
                    std::int64_t input_tokens, std::int64_t output_tokens);

  int attempts() const { return attempts_; }
  const std::vector<Violation>& last_violations() const { return last_violations_; }
  const std::string& last_text() const { return last_text_; }
  std::int64_t input_tokens() const { return input_tokens_; }
  std::int64_t output_tokens() const { return output_tokens_; }

 private:
  int attempts_;
  std::vector<Violation> last_violations_;
  std::string last_text_;
  std::int64_t input_tokens_;
  std::int64_t output_tokens_;
};

template <class T>
using Validator = std::function<Validated<T>(std::string_view)>;

template <class T>
struct StructuredResult {
  T value;
  GenerationReceipt receipt;
  std::vector<std::string> warnings;
};

std::string retry_feedback(const std::vector<Violation>& violations);

/// Calls the backend until `validate` accepts the text or max_attempts
/// validations have failed. Transport errors do not consume attempts; they
/// are retried up to max_transport_retries times per attempt and then rethrown.
template <class T>
StructuredResult<T> complete_structured(const ChatRequest& req, ChatBackend& backend, const Validator<T>& validate,
                                        const RetryPolicy& policy = {}) {
  if (policy.max_attempts < 1) throw UsageError("complete_structured: max_attempts must be >= 1");
  GenerationReceipt receipt;
  receipt.attempts = 0;
  ChatRequest attempt_req = req;
  std::vector<Violation> last_violations;
  std::string last_text;

  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    GenerationReceipt one;
    for (int transport_try = 0;; ++transport_try) {
      try {
        one = complete(attempt_req, backend);
        break;
      } catch (const TransportError&) {
        if (transport_try >= policy.max_transport_retries) throw;
        std::this_thread::sleep_for(policy.transport_backoff * (1 << transport_try));
      }
    }
    receipt.attempts = attempt;
    receipt.input_tokens += one.input_tokens;
    receipt.output_tokens += one.output_tokens;

    auto result = validate(one.final_text);
    if (result.ok()) {
      receipt.final_text = std::move(one.final_text);
      return StructuredResult<T>{std::move(*result.value), std::move(receipt), std::move(result.warnings)};
    }
    last_violations = std::move(result.violations);
    last_text = std::move(one.final_text);
    if (policy.feedback_on_retry) attempt_req.user_prompt = req.user_prompt + retry_feedback(last_violations);
  }
  throw StructuredFailure(receipt.attempts, std::move(last_violations), std::move(last_text), receipt.input_tokens,
                          receipt.output_tokens);
}

}  // namespace spirit
