#include "spirit/llm_gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace spirit {

namespace {

std::string_view kind_name(BackendKind k) {
  return k == BackendKind::mock ? "mock" : "http_openai_compatible";
}

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;              // "/v1" (no trailing slash)
};

std::optional<ParsedUrl> parse_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  auto rest = url.substr(scheme_end + 3);
  auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  if (authority.empty() || authority.front() == ':') return std::nullopt;
  ParsedUrl out;
  out.scheme_host_port = std::string(url.substr(0, scheme_end + 3 + authority.size()));
  out.path = slash == std::string_view::npos ? "" : std::string(rest.substr(slash));
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

std::string BackendConfig::fingerprint() const {
  // Referenced fixture files enter by content, so the same setup hashes alike in any directory.
  auto j = to_json(*this);
  for (const char* key : {"latent_model", "script_file"}) {
    if (!j["mock"].is_object() || !j["mock"].contains(key) || !j["mock"][key].is_string()) continue;
    std::ifstream in(j["mock"][key].get<std::string>(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    j["mock"][key] = "content:" + hex64(fnv1a64(ss.str()));
  }
  return fmt::format("{}#{}", model_name, hex64(fnv1a64(j.dump())));
}

BackendConfig backend_config_from_json(const Json& j) {
  if (!j.is_object()) throw UsageError("backend config: expected an object");
  BackendConfig cfg;
  auto kind = j.value("kind", std::string("mock"));
  if (kind == "mock") {
    cfg.kind = BackendKind::mock;
  } else if (kind == "http_openai_compatible" || kind == "http") {
    cfg.kind = BackendKind::http_openai_compatible;
  } else {
    throw UsageError(fmt::format("backend config: unknown kind '{}'", kind));
  }
  try {
    cfg.endpoint = j.value("endpoint", std::string());
    cfg.model_name = j.value("model_name", cfg.kind == BackendKind::mock ? std::string("mock") : std::string());
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.rate_limit = j.value("rate_limit", 0.0);
    cfg.api_key_env = j.value("api_key_env", std::string());
    cfg.timeout_seconds = j.value("timeout_seconds", 120.0);
    cfg.painter_temperature = j.value("painter_temperature", 0.7);
    cfg.reasoner_temperature = j.value("reasoner_temperature", 0.7);
    cfg.feedback_on_retry = j.value("feedback_on_retry", false);
    cfg.max_transport_retries = j.value("max_transport_retries", 3);
    if (auto it = j.find("mock"); it != j.end()) cfg.mock = *it;
  } catch (const Json::exception& e) {
    throw UsageError(fmt::format("backend config: {}", e.what()));
  }
  check_backend_config(cfg);
  return cfg;
}

Json to_json(const BackendConfig& cfg) {
  Json j = Json::object();
  j["kind"] = std::string(kind_name(cfg.kind));
  j["endpoint"] = cfg.endpoint;
  j["model_name"] = cfg.model_name;
  j["seed"] = cfg.seed;
  j["rate_limit"] = cfg.rate_limit;
  j["api_key_env"] = cfg.api_key_env;
  j["timeout_seconds"] = cfg.timeout_seconds;
  j["painter_temperature"] = cfg.painter_temperature;
  j["reasoner_temperature"] = cfg.reasoner_temperature;
  j["feedback_on_retry"] = cfg.feedback_on_retry;
  j["max_transport_retries"] = cfg.max_transport_retries;
  j["mock"] = cfg.mock;
  return j;
}

BackendConfig load_backend_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("cannot open backend config {}", file.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = parse_json(ss.str());
  if (!j) throw UsageError(fmt::format("backend config {} is not valid JSON", file.string()));
  auto cfg = backend_config_from_json(*j);
  // relative mock fixture paths resolve against the config's directory
  if (cfg.mock.is_object()) {
    for (const char* key : {"latent_model", "script_file"}) {
      if (cfg.mock.contains(key) && cfg.mock[key].is_string()) {
        std::filesystem::path p = cfg.mock[key].get<std::string>();
        if (p.is_relative()) cfg.mock[key] = (file.parent_path() / p).lexically_normal().string();
      }
    }
  }
  return cfg;
}

void check_backend_config(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::http_openai_compatible) {
    if (!parse_url(cfg.endpoint)) {
      throw UsageError(fmt::format("backend config: endpoint '{}' is not an http(s) URL", cfg.endpoint));
    }
    if (cfg.model_name.empty()) throw UsageError("backend config: model_name required for http backends");
  }
  if (cfg.rate_limit < 0.0) throw UsageError("backend config: rate_limit must be >= 0");
  if (cfg.max_transport_retries < 0) throw UsageError("backend config: max_transport_retries must be >= 0");
}

std::int64_t approx_tokens(std::string_view text) { return static_cast<std::int64_t>(count_words(text)); }

GenerationReceipt complete(const ChatRequest& req, ChatBackend& backend) {
  if (trim(req.system_prompt).empty() || trim(req.user_prompt).empty()) {
    throw UsageError("chat request: prompts must be non-empty");
  }
  if (req.temperature < 0.0) throw UsageError("chat request: temperature must be >= 0");
  auto c = backend.complete(req);
  GenerationReceipt r;
  r.attempts = 1;
  r.input_tokens = c.input_tokens.value_or(approx_tokens(req.system_prompt) + approx_tokens(req.user_prompt));
  r.output_tokens = c.output_tokens.value_or(approx_tokens(c.text));
  r.final_text = std::move(c.text);
  return r;
}

RateLimiter::RateLimiter(double per_second, double burst)
    : per_second_(per_second), burst_(std::max(burst, 1.0)), tokens_(std::max(burst, 1.0)), last_(SteadyClock::now()) {}

void RateLimiter::acquire() {
  if (unlimited()) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    auto now = SteadyClock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * per_second_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / per_second_);
    // holding the lock while sleeping serializes dispatch, which is the intent
    std::this_thread::sleep_for(wait);
  }
}

HttpChatBackend::HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)), limiter_(cfg_.rate_limit) {
  check_backend_config(cfg_);
  if (cfg_.kind != BackendKind::http_openai_compatible) throw UsageError("HttpChatBackend needs an http config");
}

Json HttpChatBackend::request_body(const BackendConfig& cfg, const ChatRequest& req) {
  Json body = Json::object();
  body["model"] = cfg.model_name;
  body["messages"] = Json::array({Json{{"role", "system"}, {"content", req.system_prompt}},
                                  Json{{"role", "user"}, {"content", req.user_prompt}}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_output;
  return body;
}

Completion HttpChatBackend::parse_response(const std::string& body) {
  auto j = parse_json(body);
  if (!j || !j->is_object()) throw TransportError("chat completion: response is not JSON");
  Completion c;
  try {
    const auto& choices = j->at("choices");
    if (!choices.is_array() || choices.empty()) throw BackendRefusal("chat completion: no choices returned");
    const auto& message = choices.at(0).at("message");
    const auto& content = message.at("content");
    if (!content.is_string()) throw BackendRefusal("chat completion: message content is not text");
    c.text = content.get<std::string>();
  } catch (const Json::exception& e) {
    throw TransportError(fmt::format("chat completion: malformed response ({})", e.what()));
  }
  if (auto u = j->find("usage"); u != j->end() && u->is_object()) {
    if (u->contains("prompt_tokens") && (*u)["prompt_tokens"].is_number_integer()) {
      c.input_tokens = (*u)["prompt_tokens"].get<std::int64_t>();
    }
    if (u->contains("completion_tokens") && (*u)["completion_tokens"].is_number_integer()) {
      c.output_tokens = (*u)["completion_tokens"].get<std::int64_t>();
    }
  }
  return c;
}

Completion HttpChatBackend::complete(const ChatRequest& req) {
  auto url = parse_url(cfg_.endpoint);
  std::string path = url->path;
  if (path.size() < 17 || path.substr(path.size() - 17) != "/chat/completions") path += "/chat/completions";

  httplib::Client client(url->scheme_host_port);
  auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
  auto secs = static_cast<time_t>(timeout.count());
  auto usecs = static_cast<time_t>((timeout.count() - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", fmt::format("Bearer {}", key));
    }
  }

  limiter_.acquire();
  auto res = client.Post(path, headers, request_body(cfg_, req).dump(), "application/json");
  if (!res) {
    throw TransportError(fmt::format("POST {}{}: {}", url->scheme_host_port, path, httplib::to_string(res.error())));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError(fmt::format("POST {}: HTTP {}", path, res->status));
  }
  if (res->status != 200) {
    throw BackendRefusal(fmt::format("POST {}: HTTP {}: {}", path, res->status, res->body.substr(0, 200)));
  }
  return parse_response(res->body);
}

std::uint64_t request_hash(const ChatRequest& req, std::uint64_t seed) {
  auto h = fnv1a64(req.system_prompt, fnv1a64(std::to_string(seed)));
  h = fnv1a64("\x1f", h);
  return fnv1a64(req.user_prompt, h);
}

ScriptedMockBackend::ScriptedMockBackend(std::vector<Rule> rules, std::uint64_t seed, std::string model_name)
    : rules_(std::move(rules)), seed_(seed), model_name_(std::move(model_name)) {
  for (const auto& r : rules_) {
    if (r.responses.empty()) throw UsageError("scripted mock: every rule needs at least one response");
  }
}

std::unique_ptr<ScriptedMockBackend> ScriptedMockBackend::from_config(const BackendConfig& cfg) {
  Json rules_json;
  if (cfg.mock.contains("rules")) {
    rules_json = cfg.mock["rules"];
  } else if (cfg.mock.contains("script_file")) {
    std::ifstream in(cfg.mock["script_file"].get<std::string>());
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = parse_json(ss.str());
    if (!j || !j->contains("rules")) throw UsageError("scripted mock: script_file has no rules");
    rules_json = (*j)["rules"];
  } else {
    throw UsageError("scripted mock: settings need 'rules' or 'script_file'");
  }
  std::vector<Rule> rules;
  for (const auto& r : rules_json) {
    Rule rule;
    rule.match = r.value("match", std::string());
    for (const auto& resp : r.at("responses")) rule.responses.push_back(resp.get<std::string>());
    rules.push_back(std::move(rule));
  }
  return std::make_unique<ScriptedMockBackend>(std::move(rules), cfg.seed, cfg.model_name);
}

Completion ScriptedMockBackend::complete(const ChatRequest& req) {
  std::string haystack = req.system_prompt + "\n" + req.user_prompt;
  auto h = request_hash(req, seed_);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    if (!rule.match.empty() && haystack.find(rule.match) == std::string::npos) continue;
    std::size_t index;
    {
      std::lock_guard lock(mutex_);
      auto& n = seen_[h];
      index = std::min(n, rule.responses.size() - 1);
      ++n;
      log_.push_back({i, index, req.tag});
    }
    std::string text = rule.responses[index];
    static constexpr std::string_view kPlaceholder = "{{request_hash}}";
    for (auto pos = text.find(kPlaceholder); pos != std::string::npos; pos = text.find(kPlaceholder, pos)) {
      text.replace(pos, kPlaceholder.size(), hex64(h));
    }
    return Completion{std::move(text), std::nullopt, std::nullopt};
  }
  throw BackendRefusal(fmt::format("scripted mock: no rule matches request '{}'", req.tag));
}

std::string ScriptedMockBackend::fingerprint() const {
  std::string all;
  for (const auto& r : rules_) {
    all += r.match;
    all += '\x1e';
    for (const auto& s : r.responses) {
      all += s;
      all += '\x1f';
    }
  }
  return fmt::format("{}#script-{}", model_name_, hex64(fnv1a64(all, seed_)));
}

std::vector<ScriptedMockBackend::LogEntry> ScriptedMockBackend::log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t ScriptedMockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

RetryPolicy RetryPolicy::from(const BackendConfig& cfg, int max_attempts) {
  RetryPolicy p;
  p.max_attempts = max_attempts;
  p.feedback_on_retry = cfg.feedback_on_retry;
  p.max_transport_retries = cfg.max_transport_retries;
  return p;
}

StructuredFailure::StructuredFailure(int attempts, std::vector<Violation> last_violations, std::string last_text,
                                     std::int64_t input_tokens, std::int64_t output_tokens)
    : BackendError(fmt::format("no valid output after {} attempts; last: {}", attempts, describe(last_violations))),
      attempts_(attempts),
      last_violations_(std::move(last_violations)),
      last_text_(std::move(last_text)),
      input_tokens_(input_tokens),
      output_tokens_(output_tokens) {}

std::string retry_feedback(const std::vector<Violation>& violations) {
  std::string out = "\n\nYOUR PREVIOUS OUTPUT WAS REJECTED. Fix these problems:\n";
  for (const auto& v : violations) out += fmt::format("- {}\n", describe(v));
  return out;
}

}  // namespace spirit
