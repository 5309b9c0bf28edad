#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace spirit {

/// Insertion-ordered JSON: artifacts are written in schema order.
using Json = nlohmann::ordered_json;

using Clock = std::chrono::system_clock;
using Instant = std::chrono::sys_seconds;

// Error families map onto CLI exit codes (usage 2, data 3, backend 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

enum class ViolationKind {
  parse_error,
  not_an_object,
  missing_key,
  unknown_key,
  demographic_key,
  wrong_type,
  bad_enum,
  empty_value,
  empty_rationale,
  missing_separator,
  empty_narrative,
  cardinality,
  invalid_code,
  label_mismatch,
};

std::string_view to_string(ViolationKind kind);

/// One violated constraint. `path` uses dotted keys with [i] for list items,
/// e.g. "opinions_and_beliefs.politics_and_society[0].rationale".
struct Violation {
  std::string path;
  ViolationKind kind;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

std::string describe(const Violation& v);
std::string describe(const std::vector<Violation>& vs);

/// Outcome of validating model output: a value, or the full violation list.
template <class T>
struct Validated {
  std::optional<T> value;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool ok() const { return value.has_value(); }

  static Validated success(T v, std::vector<std::string> warnings = {}) {
    Validated out;
    out.value = std::move(v);
    out.warnings = std::move(warnings);
    return out;
  }
  static Validated failure(std::vector<Violation> vs) {
    Validated out;
    out.violations = std::move(vs);
    return out;
  }
};

// Text helpers.
std::string_view trim(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
std::size_t count_words(std::string_view s);

/// Strips one enclosing markdown fence (```json ... ```) if present, then trims.
std::string_view strip_code_fence(std::string_view s);

/// Parses a single JSON document; nullopt on any syntax error.
std::optional<Json> parse_json(std::string_view text);

// 64-bit FNV-1a, used for stable content hashes (mock keys, fingerprints).
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// ISO-8601 UTC instants, "YYYY-MM-DDTHH:MM:SSZ". Parsing also accepts a
// fractional-seconds part and "+00:00" offsets; other offsets are applied.
std::optional<Instant> parse_iso8601(std::string_view s);
std::string format_iso8601(Instant t);

/// Current time, or SOURCE_DATE_EPOCH when set (reproducible outputs).
Instant now_or_source_date();

}  // namespace spirit
