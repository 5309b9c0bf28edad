#include "spirit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

namespace spirit {

std::string_view to_string(Platform p) { return p == Platform::reddit ? "reddit" : "twitter"; }

std::optional<Platform> parse_platform(std::string_view s) {
  if (s == "reddit") return Platform::reddit;
  if (s == "twitter" || s == "x") return Platform::twitter;
  return std::nullopt;
}

CorpusParseError::CorpusParseError(std::string file, std::size_t line, const std::string& why)
    : DataError(fmt::format("{}:{}: {}", file, line, why)), file_(std::move(file)), line_(line) {}

namespace {

std::string header_line(const Post& p) {
  return fmt::format("[{}] {}", format_iso8601(p.timestamp), to_string(p.platform));
}

}  // namespace

UserDocument build_document(std::span<const Post> posts, const DocumentOptions& options) {
  if (posts.empty()) throw EmptyCorpusError("build_document: zero posts");
  const auto& user = posts.front().user_id;
  for (const auto& p : posts) {
    if (p.user_id != user) {
      throw MixedUserError(fmt::format("build_document: posts from '{}' and '{}' in one document", user, p.user_id));
    }
  }

  std::vector<const Post*> order;
  order.reserve(posts.size());
  for (const auto& p : posts) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const Post* a, const Post* b) { return a->timestamp < b->timestamp; });

  if (options.drop_exact_duplicates) {
    std::vector<const Post*> unique;
    for (const Post* p : order) {
      // duplicates share a timestamp, so they are adjacent within a tie run
      bool seen = false;
      for (auto it = unique.rbegin(); it != unique.rend() && (*it)->timestamp == p->timestamp; ++it) {
        if (**it == *p) {
          seen = true;
          break;
        }
      }
      if (!seen) unique.push_back(p);
    }
    order = std::move(unique);
  }

  UserDocument doc;
  doc.user_id = user;

  std::size_t first = 0;
  if (options.max_chars > 0) {
    std::size_t total = 0;
    for (const Post* p : order) total += p->text.size();
    while (first < order.size() && total > options.max_chars) {
      total -= order[first]->text.size();
      ++first;
    }
  }
  doc.dropped_posts = posts.size() - (order.size() - first);

  for (std::size_t i = first; i < order.size(); ++i) {
    const Post& p = *order[i];
    doc.platforms.insert(p.platform);
    doc.platform_mix[p.platform] += 1;
    doc.post_count += 1;
    doc.char_count += p.text.size();
    doc.body += header_line(p);
    doc.body += '\n';
    doc.body += p.deleted && p.text.empty() ? "[deleted]" : p.text;
    doc.body += "\n\n";
  }
  if (doc.post_count == 0) throw EmptyCorpusError(fmt::format("build_document: '{}' has no posts within budget", user));
  return doc;
}

TraceFeatures trace_features(const UserDocument& doc) {
  TraceFeatures f;
  f.char_count = doc.char_count;
  f.post_count = doc.post_count;
  f.log_char_count = std::log(static_cast<double>(doc.char_count) + 1.0);
  f.platform_mix = doc.platform_mix;
  return f;
}

Json to_json(const TraceFeatures& f) {
  Json mix = Json::object();
  for (const auto& [p, n] : f.platform_mix) mix[std::string(to_string(p))] = n;
  Json j = Json::object();
  j["log_char_count"] = f.log_char_count;
  j["char_count"] = f.char_count;
  j["post_count"] = f.post_count;
  j["platform_mix"] = std::move(mix);
  return j;
}

TraceFeatures trace_features_from_json(const Json& j) {
  TraceFeatures f;
  f.log_char_count = j.at("log_char_count").get<double>();
  f.char_count = j.at("char_count").get<std::size_t>();
  f.post_count = j.at("post_count").get<std::size_t>();
  for (const auto& [k, v] : j.at("platform_mix").items()) {
    auto p = parse_platform(k);
    if (!p) throw DataError(fmt::format("trace features: unknown platform '{}'", k));
    f.platform_mix[*p] = v.get<std::size_t>();
  }
  return f;
}

Post post_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("post: expected an object");
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw DataError(fmt::format("post: '{}' missing or not a string", key));
    return it->get<std::string>();
  };
  Post p;
  p.user_id = str("user_id");
  if (p.user_id.empty()) throw DataError("post: empty user_id");
  auto platform = str("platform");
  auto parsed_platform = parse_platform(platform);
  if (!parsed_platform) throw DataError(fmt::format("post: unknown platform '{}'", platform));
  p.platform = *parsed_platform;
  auto ts = str("timestamp");
  auto parsed_ts = parse_iso8601(ts);
  if (!parsed_ts) throw DataError(fmt::format("post: bad timestamp '{}'", ts));
  p.timestamp = *parsed_ts;
  p.text = str("text");
  if (auto it = j.find("deleted"); it != j.end()) {
    if (!it->is_boolean()) throw DataError("post: 'deleted' must be a boolean");
    p.deleted = it->get<bool>();
  }
  if (p.text.empty() && !p.deleted) throw DataError("post: empty text without deleted flag");
  return p;
}

Json to_json(const Post& p) {
  Json j = Json::object();
  j["user_id"] = p.user_id;
  j["platform"] = std::string(to_string(p.platform));
  j["timestamp"] = format_iso8601(p.timestamp);
  j["text"] = p.text;
  if (p.deleted) j["deleted"] = true;
  return j;
}

std::vector<Post> read_posts_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw CorpusParseError(file.string(), 0, "cannot open");
  std::vector<Post> posts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = parse_json(line);
    if (!j) throw CorpusParseError(file.string(), lineno, "invalid JSON");
    try {
      posts.push_back(post_from_json(*j));
    } catch (const DataError& e) {
      throw CorpusParseError(file.string(), lineno, e.what());
    }
  }
  return posts;
}

void write_posts_jsonl(const std::filesystem::path& file, std::span<const Post> posts) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
  for (const auto& p : posts) out << to_json(p).dump() << '\n';
}

std::map<std::string, std::vector<Post>> group_by_user(std::span<const Post> posts) {
  std::map<std::string, std::vector<Post>> out;
  for (const auto& p : posts) out[p.user_id].push_back(p);
  return out;
}

}  // namespace spirit
