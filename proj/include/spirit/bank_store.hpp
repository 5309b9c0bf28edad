#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spirit/corpus.hpp"
#include "spirit/persona_schema.hpp"
#include "spirit/survey.hpp"

namespace spirit {

struct BackendFingerprint {
  std::string model_name;
  std::string config_hash;

  /// Splits "<model>#<hash>" as produced by BackendConfig::fingerprint().
  static BackendFingerprint parse(std::string_view s);
  std::string str() const { return model_name + "#" + config_hash; }
  bool operator==(const BackendFingerprint&) const = default;
};

/// Panel variables that accompany a user: the seven demographics plus any
/// extra raking attributes (region, candidate2024, ...).
struct PanelRecord {
  std::string user_id;
  std::optional<DemographicPersona> demographics;
  std::map<std::string, std::string> attributes;

  bool operator==(const PanelRecord&) const = default;
};

/// JSONL, one object per user: {"user_id", "demographics": {...}?, "attributes": {...}?}.
std::map<std::string, PanelRecord> load_panel(const std::filesystem::path& file);
void write_panel(const std::filesystem::path& file, std::span<const PanelRecord> records);

struct BankEntry {
  std::string user_id;
  std::set<Platform> platforms;
  std::optional<DemographicPersona> demographics;
  std::map<std::string, std::string> attributes;
  PersonaProfile profile;
  Instant painted_at{};
  BackendFingerprint backend;
  TraceFeatures trace;
  int version = 0;  // assigned by the store

  bool operator==(const BankEntry&) const = default;
};

Json to_json(const BankEntry& e);
BankEntry bank_entry_from_json(const Json& j);

class DuplicateUserError : public DataError {
 public:
  explicit DuplicateUserError(const std::string& user_id);
};

class UnknownUserError : public DataError {
 public:
  explicit UnknownUserError(const std::string& user_id);
};

class UnknownRunError : public DataError {
 public:
  explicit UnknownRunError(const std::string& run_id);
};

class BankLockedError : public Error {
 public:
  using Error::Error;
};

struct RunManifest {
  std::string run_id;  // assigned by record_run
  std::string survey_id;
  Protocol protocol = Protocol::direct;
  BackendFingerprint backend;
  Instant timestamp{};
  std::string responses_path;  // relative to the store root
  std::size_t n_records = 0;
  std::size_t n_failures = 0;
  Json extra = Json::object();  // protocol-specific stats (search calls, demographics flag, ...)

  bool operator==(const RunManifest&) const = default;
};

Json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const Json& j);

struct StoredRun {
  RunManifest manifest;
  SurveySpec survey;
  std::vector<ResponseRecord> responses;
};

/// Directory-backed persona bank:
///   bank/index.json, bank/<user>/{persona,narrative,entry}.v<k>.*, bank/<user>/document.txt
///   runs/<run_id>/{manifest.json, survey.json, responses.jsonl, failures.jsonl}
///   weights/<name>.csv, receipts.jsonl
/// A writer holds an exclusive advisory lock on <root>/.lock for its lifetime.
class BankStore {
 public:
  enum class Mode { read, write };

  explicit BankStore(std::filesystem::path root, Mode mode = Mode::write);
  ~BankStore();
  BankStore(const BankStore&) = delete;
  BankStore& operator=(const BankStore&) = delete;

  const std::filesystem::path& root() const { return root_; }

  /// Stores a new entry and returns its version. Re-putting an identical
  /// entry is a no-op; a differing one needs `repaint`, which adds a version
  /// and keeps the previous files.
  int put_entry(BankEntry entry, bool repaint = false);

  bool contains(std::string_view user_id) const;
  std::optional<BankEntry> get_entry(std::string_view user_id) const;
  std::optional<BankEntry> get_entry_version(std::string_view user_id, int version) const;
  int latest_version(std::string_view user_id) const;
  /// Sorted by user id.
  std::vector<BankEntry> list_entries(std::optional<Platform> platform = std::nullopt) const;
  std::vector<std::string> user_ids() const;

  void put_document(const UserDocument& doc);
  void append_receipt(const Json& receipt);

  /// Writes an immutable run directory and returns the new run id
  /// "r<NNNN>-<survey>-<protocol>".
  std::string record_run(RunManifest manifest, const SurveySpec& survey, std::span<const ResponseRecord> responses,
                         std::span<const Json> failures = {});
  StoredRun load_run(std::string_view run_id) const;
  std::string run_responses_bytes(std::string_view run_id) const;
  std::vector<std::string> run_ids() const;

  std::filesystem::path weights_path(std::string_view name) const;

  Json export_json() const;
  /// Imports every version into this (empty) store.
  void import_json(const Json& bank);

 private:
  struct IndexRow {
    int version = 0;
    std::set<Platform> platforms;
  };

  void require_writer() const;
  void load_index();
  void save_index() const;
  std::filesystem::path user_dir(std::string_view user_id) const;
  void write_version(const BankEntry& e) const;

  std::filesystem::path root_;
  Mode mode_;
  int lock_fd_ = -1;
  std::map<std::string, IndexRow, std::less<>> index_;
};

/// Rejects ids that are unsafe as a directory name.
void check_user_id(std::string_view user_id);

}  // namespace spirit
