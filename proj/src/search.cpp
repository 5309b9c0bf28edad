#include "spirit/search.hpp"

#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>

#include "spirit/survey.hpp"

namespace spirit {

Json to_json(const SearchResult& r) {
  Json j = Json::object();
  j["title"] = r.title;
  j["snippet"] = r.snippet;
  j["url"] = r.url;
  return j;
}

namespace {

std::vector<SearchResult> results_from_json(const Json& arr) {
  std::vector<SearchResult> out;
  for (const auto& r : arr) {
    out.push_back({r.value("title", std::string()), r.value("snippet", r.value("content", std::string())),
                   r.value("url", std::string())});
  }
  return out;
}

std::vector<SearchResult> top(std::vector<SearchResult> v, int top_k) {
  if (top_k >= 0 && v.size() > static_cast<std::size_t>(top_k)) v.resize(static_cast<std::size_t>(top_k));
  return v;
}

}  // namespace

FixtureSearch::FixtureSearch(const Json& fixture) {
  try {
    if (auto it = fixture.find("results"); it != fixture.end()) {
      for (const auto& [q, arr] : it->items()) by_query_[q] = results_from_json(arr);
    }
    if (auto it = fixture.find("default"); it != fixture.end()) fallback_ = results_from_json(*it);
  } catch (const Json::exception& e) {
    throw UsageError(fmt::format("search fixture: {}", e.what()));
  }
}

std::unique_ptr<FixtureSearch> FixtureSearch::load(const std::filesystem::path& file) {
  auto j = parse_json(read_text_file(file));
  if (!j) throw UsageError(fmt::format("{}: invalid JSON", file.string()));
  return std::make_unique<FixtureSearch>(*j);
}

std::vector<SearchResult> FixtureSearch::search(const std::string& query, int top_k) {
  auto it = by_query_.find(query);
  return top(it == by_query_.end() ? fallback_ : it->second, top_k);
}

HttpSearch::HttpSearch(std::string endpoint, std::string api_key_env, double rate_limit, double timeout_seconds)
    : endpoint_(std::move(endpoint)),
      api_key_env_(std::move(api_key_env)),
      timeout_seconds_(timeout_seconds),
      limiter_(rate_limit) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.rfind("http://", 0) != 0 && endpoint_.rfind("https://", 0) != 0) {
    throw UsageError(fmt::format("search endpoint '{}' is not an http(s) URL", endpoint_));
  }
}

std::vector<SearchResult> HttpSearch::search(const std::string& query, int top_k) {
  limiter_.acquire();
  httplib::Client client(endpoint_);
  auto secs = static_cast<time_t>(timeout_seconds_);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  Json body = Json::object();
  if (!api_key_env_.empty()) {
    const char* key = std::getenv(api_key_env_.c_str());
    body["api_key"] = key ? key : "";
  }
  body["query"] = query;
  body["max_results"] = top_k;
  auto res = client.Post("/search", body.dump(), "application/json");
  if (!res) throw SearchError(fmt::format("search {}: {}", endpoint_, httplib::to_string(res.error())));
  if (res->status != 200) throw SearchError(fmt::format("search {}: HTTP {}", endpoint_, res->status));
  auto j = parse_json(res->body);
  if (!j || !j->contains("results")) throw SearchError("search: malformed response");
  return top(results_from_json(j->at("results")), top_k);
}

std::vector<SearchResult> InstrumentedSearch::search(const std::string& query, int top_k) {
  auto out = inner_.search(query, top_k);
  calls_.fetch_add(1);
  results_.fetch_add(out.size());
  return out;
}

std::unique_ptr<SearchBackend> make_search_backend(const Json& cfg, const std::filesystem::path& base_dir) {
  auto kind = cfg.value("kind", std::string("fixture"));
  if (kind == "fixture") {
    if (cfg.contains("fixture")) return std::make_unique<FixtureSearch>(cfg.at("fixture"));
    std::filesystem::path file = cfg.value("file", std::string());
    if (file.empty()) throw UsageError("search config: fixture kind needs \"file\" or \"fixture\"");
    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
    return FixtureSearch::load(file);
  }
  if (kind == "http" || kind == "tavily") {
    return std::make_unique<HttpSearch>(cfg.value("endpoint", std::string("https://api.tavily.com")),
                                        cfg.value("api_key_env", std::string("TAVILY_API_KEY")),
                                        cfg.value("rate_limit", 0.0), cfg.value("timeout_seconds", 30.0));
  }
  throw UsageError(fmt::format("search config: unknown kind '{}'", kind));
}

std::unique_ptr<SearchBackend> load_search_backend(const std::filesystem::path& config_file) {
  auto j = parse_json(read_text_file(config_file));
  if (!j || !j->is_object()) throw UsageError(fmt::format("{}: invalid search config", config_file.string()));
  return make_search_backend(*j, config_file.parent_path());
}

}  // namespace spirit
