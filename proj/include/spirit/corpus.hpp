#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spirit/common.hpp"

namespace spirit {

enum class Platform { reddit, twitter };

std::string_view to_string(Platform p);
std::optional<Platform> parse_platform(std::string_view s);

struct Post {
  std::string user_id;
  Platform platform = Platform::reddit;
  Instant timestamp{};
  std::string text;
  bool deleted = false;  // empty text is only legal when set

  bool operator==(const Post&) const = default;
};

class MixedUserError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyCorpusError : public DataError {
 public:
  using DataError::DataError;
};

/// Malformed posts input; the message carries "<file>:<line>".
class CorpusParseError : public DataError {
 public:
  CorpusParseError(std::string file, std::size_t line, const std::string& why);
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

struct DocumentOptions {
  /// Upper bound on char_count; oldest posts are dropped first. 0 disables.
  std::size_t max_chars = 0;
  bool drop_exact_duplicates = true;
};

/// Timestamp-ordered concatenation of one user's posts.
struct UserDocument {
  std::string user_id;
  std::set<Platform> platforms;
  std::size_t post_count = 0;
  std::size_t char_count = 0;  // post texts only, headers excluded
  std::size_t dropped_posts = 0;
  std::map<Platform, std::size_t> platform_mix;
  std::string body;

  bool operator==(const UserDocument&) const = default;
};

/// Stable sort by timestamp; each post is preceded by "[<ISO-8601>] <platform>".
UserDocument build_document(std::span<const Post> posts, const DocumentOptions& options = {});

struct TraceFeatures {
  double log_char_count = 0.0;  // ln(char_count + 1)
  std::size_t post_count = 0;
  std::size_t char_count = 0;
  std::map<Platform, std::size_t> platform_mix;

  bool operator==(const TraceFeatures&) const = default;
};

TraceFeatures trace_features(const UserDocument& doc);

Json to_json(const TraceFeatures& f);
TraceFeatures trace_features_from_json(const Json& j);

// JSON-lines ingestion: {"user_id", "platform", "timestamp", "text", "deleted"?}.
Post post_from_json(const Json& j);
Json to_json(const Post& p);
std::vector<Post> read_posts_jsonl(const std::filesystem::path& file);
void write_posts_jsonl(const std::filesystem::path& file, std::span<const Post> posts);

/// Groups by user id (sorted), preserving input order within a user.
std::map<std::string, std::vector<Post>> group_by_user(std::span<const Post> posts);

}  // namespace spirit
