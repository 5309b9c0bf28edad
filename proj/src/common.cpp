#include "spirit/common.hpp"

#include <cctype>
#include <cstdlib>

#include <fmt/format.h>

namespace spirit {

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::parse_error: return "parse_error";
    case ViolationKind::not_an_object: return "not_an_object";
    case ViolationKind::missing_key: return "missing_key";
    case ViolationKind::unknown_key: return "unknown_key";
    case ViolationKind::demographic_key: return "demographic_key";
    case ViolationKind::wrong_type: return "wrong_type";
    case ViolationKind::bad_enum: return "bad_enum";
    case ViolationKind::empty_value: return "empty_value";
    case ViolationKind::empty_rationale: return "empty_rationale";
    case ViolationKind::missing_separator: return "missing_separator";
    case ViolationKind::empty_narrative: return "empty_narrative";
    case ViolationKind::cardinality: return "cardinality";
    case ViolationKind::invalid_code: return "invalid_code";
    case ViolationKind::label_mismatch: return "label_mismatch";
  }
  return "unknown";
}

std::string describe(const Violation& v) {
  if (v.detail.empty()) return fmt::format("{}: {}", v.path, to_string(v.kind));
  return fmt::format("{}: {} ({})", v.path, to_string(v.kind), v.detail);
}

std::string describe(const std::vector<Violation>& vs) {
  std::string out;
  for (const auto& v : vs) {
    if (!out.empty()) out += "; ";
    out += describe(v);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string_view strip_code_fence(std::string_view s) {
  s = trim(s);
  if (s.size() < 6 || s.substr(0, 3) != "```" || s.substr(s.size() - 3) != "```") return s;
  auto first_nl = s.find('\n');
  if (first_nl == std::string_view::npos) return s;
  auto inner = s.substr(first_nl + 1, s.size() - 3 - (first_nl + 1));
  return trim(inner);
}

std::optional<Json> parse_json(std::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<Instant> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  s = trim(s);
  int y, mo, d, h, mi, sec;
  if (!read_int(s, 0, 4, y) || s.size() < 19 || s[4] != '-' || !read_int(s, 5, 2, mo) || s[7] != '-' ||
      !read_int(s, 8, 2, d) || (s[10] != 'T' && s[10] != ' ') || !read_int(s, 11, 2, h) || s[13] != ':' ||
      !read_int(s, 14, 2, mi) || s[16] != ':' || !read_int(s, 17, 2, sec)) {
    return std::nullopt;
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  int offset_minutes = 0;
  auto rest = s.substr(pos);
  if (rest == "Z" || rest == "z" || rest.empty()) {
    // UTC
  } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
    int oh, om;
    if (!read_int(rest, 1, 2, oh) || !read_int(rest, 4, 2, om)) return std::nullopt;
    offset_minutes = (oh * 60 + om) * (rest[0] == '-' ? -1 : 1);
  } else {
    return std::nullopt;
  }
  auto t = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
  return time_point_cast<seconds>(t);
}

std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss hms{t - day_point};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count());
}

Instant now_or_source_date() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    char* end = nullptr;
    long long v = std::strtoll(epoch, &end, 10);
    if (end != nullptr && *end == '\0') return Instant{std::chrono::seconds{v}};
  }
  return std::chrono::time_point_cast<std::chrono::seconds>(Clock::now());
}

}  // namespace spirit
