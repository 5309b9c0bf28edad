#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spirit/common.hpp"
#include "spirit/llm_gateway.hpp"

namespace spirit {

struct SearchResult {
  std::string title;
  std::string snippet;
  std::string url;

  bool operator==(const SearchResult&) const = default;
};

Json to_json(const SearchResult& r);

class SearchError : public BackendError {
 public:
  using BackendError::BackendError;
};

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual std::vector<SearchResult> search(const std::string& query, int top_k) = 0;
};

/// Canned results: {"results": {"<query>": [...]}, "default": [...]}.
/// Queries without an entry get "default" (or nothing). Output is cut to top_k.
class FixtureSearch final : public SearchBackend {
 public:
  explicit FixtureSearch(const Json& fixture);
  static std::unique_ptr<FixtureSearch> load(const std::filesystem::path& file);
  std::vector<SearchResult> search(const std::string& query, int top_k) override;

 private:
  std::map<std::string, std::vector<SearchResult>> by_query_;
  std::vector<SearchResult> fallback_;
};

/// Tavily-style `POST <endpoint>/search` {"api_key", "query", "max_results"}.
class HttpSearch final : public SearchBackend {
 public:
  HttpSearch(std::string endpoint, std::string api_key_env, double rate_limit, double timeout_seconds);
  std::vector<SearchResult> search(const std::string& query, int top_k) override;

 private:
  std::string endpoint_;
  std::string api_key_env_;
  double timeout_seconds_;
  RateLimiter limiter_;
};

/// Counts calls and returned results of the wrapped backend.
class InstrumentedSearch final : public SearchBackend {
 public:
  explicit InstrumentedSearch(SearchBackend& inner) : inner_(inner) {}
  std::vector<SearchResult> search(const std::string& query, int top_k) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t results() const { return results_.load(); }

 private:
  SearchBackend& inner_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> results_{0};
};

/// Config: {"kind": "fixture", "file": "..."} or
/// {"kind": "http", "endpoint": "https://api.tavily.com", "api_key_env": "...", "rate_limit": 1}.
/// Relative fixture paths resolve against the config file's directory.
std::unique_ptr<SearchBackend> load_search_backend(const std::filesystem::path& config_file);
std::unique_ptr<SearchBackend> make_search_backend(const Json& cfg, const std::filesystem::path& base_dir = {});

}  // namespace spirit
