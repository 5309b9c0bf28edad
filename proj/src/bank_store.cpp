#include "spirit/bank_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <regex>

#include <fmt/format.h>

namespace spirit {

namespace fs = std::filesystem;

BackendFingerprint BackendFingerprint::parse(std::string_view s) {
  auto pos = s.rfind('#');
  if (pos == std::string_view::npos) return {std::string(s), {}};
  return {std::string(s.substr(0, pos)), std::string(s.substr(pos + 1))};
}

void check_user_id(std::string_view user_id) {
  static const std::regex ok("[A-Za-z0-9_@-][A-Za-z0-9_.@-]*");
  if (user_id.empty() || user_id.size() > 200 || !std::regex_match(user_id.begin(), user_id.end(), ok)) {
    throw DataError(fmt::format("user id '{}' is not usable as a bank key", user_id));
  }
}

DuplicateUserError::DuplicateUserError(const std::string& user_id)
    : DataError(fmt::format("user '{}' is already in the bank with different content (use --repaint)", user_id)) {}

UnknownUserError::UnknownUserError(const std::string& user_id)
    : DataError(fmt::format("user '{}' is not in the bank", user_id)) {}

UnknownRunError::UnknownRunError(const std::string& run_id) : DataError(fmt::format("no run '{}'", run_id)) {}

namespace {

Json platforms_json(const std::set<Platform>& ps) {
  Json out = Json::array();
  for (auto p : ps) out.push_back(std::string(to_string(p)));
  return out;
}

std::set<Platform> platforms_from_json(const Json& j) {
  std::set<Platform> out;
  for (const auto& p : j) {
    auto parsed = parse_platform(p.get<std::string>());
    if (!parsed) throw DataError(fmt::format("unknown platform '{}'", p.get<std::string>()));
    out.insert(*parsed);
  }
  return out;
}

Json attributes_json(const std::map<std::string, std::string>& attrs) {
  Json out = Json::object();
  for (const auto& [k, v] : attrs) out[k] = v;
  return out;
}

std::map<std::string, std::string> attributes_from_json(const Json& j) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return out;
}

/// Bank metadata without the profile, which lives in its own files.
Json entry_meta(const BankEntry& e) {
  Json j = Json::object();
  j["user_id"] = e.user_id;
  j["version"] = e.version;
  j["platforms"] = platforms_json(e.platforms);
  j["demographics"] = e.demographics ? to_json(*e.demographics) : Json(nullptr);
  j["attributes"] = attributes_json(e.attributes);
  j["painted_at"] = format_iso8601(e.painted_at);
  j["backend"] = Json{{"model_name", e.backend.model_name}, {"config_hash", e.backend.config_hash}};
  j["trace_features"] = to_json(e.trace);
  return j;
}

void apply_meta(BankEntry& e, const Json& j) {
  e.user_id = j.at("user_id").get<std::string>();
  e.version = j.at("version").get<int>();
  e.platforms = platforms_from_json(j.at("platforms"));
  if (auto it = j.find("demographics"); it != j.end() && !it->is_null()) e.demographics = demographics_from_json(*it);
  if (auto it = j.find("attributes"); it != j.end()) e.attributes = attributes_from_json(*it);
  auto at = parse_iso8601(j.at("painted_at").get<std::string>());
  if (!at) throw DataError("bank entry: bad painted_at");
  e.painted_at = *at;
  e.backend.model_name = j.at("backend").at("model_name").get<std::string>();
  e.backend.config_hash = j.at("backend").at("config_hash").get<std::string>();
  e.trace = trace_features_from_json(j.at("trace_features"));
}

PersonaProfile profile_from(const Json& persona, std::string narrative, std::string_view who) {
  auto v = validate_profile(persona);
  if (!v.ok()) throw DataError(fmt::format("stored persona for '{}' is invalid: {}", who, describe(v.violations)));
  v.value->narrative = std::move(narrative);
  return std::move(*v.value);
}

Json load_json_file(const fs::path& file) {
  auto j = parse_json(read_text_file(file));
  if (!j) throw DataError(fmt::format("{}: invalid JSON", file.string()));
  return std::move(*j);
}

void write_readonly(const fs::path& file, std::string_view text) {
  write_text_file(file, text);
  fs::permissions(file, fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read,
                  fs::perm_options::replace);
}

// Everything except store-assigned bookkeeping: decides whether a re-put is a no-op.
bool same_content(const BankEntry& a, const BankEntry& b) {
  return a.user_id == b.user_id && a.platforms == b.platforms && a.demographics == b.demographics &&
         a.attributes == b.attributes && a.profile == b.profile && a.backend == b.backend && a.trace == b.trace;
}

}  // namespace

Json to_json(const BankEntry& e) {
  Json j = entry_meta(e);
  j["profile"] = to_json(e.profile);
  j["narrative"] = e.profile.narrative;
  return j;
}

BankEntry bank_entry_from_json(const Json& j) {
  try {
    BankEntry e;
    apply_meta(e, j);
    e.profile = profile_from(j.at("profile"), j.at("narrative").get<std::string>(), e.user_id);
    return e;
  } catch (const Json::exception& ex) {
    throw DataError(fmt::format("bank entry: {}", ex.what()));
  }
}

std::map<std::string, PanelRecord> load_panel(const fs::path& file) {
  std::map<std::string, PanelRecord> out;
  std::size_t lineno = 0;
  const std::string text = read_text_file(file);
  for (auto line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = parse_json(line);
    if (!j) throw DataError(fmt::format("{}:{}: invalid JSON", file.string(), lineno));
    try {
      PanelRecord r;
      r.user_id = j->at("user_id").get<std::string>();
      if (auto it = j->find("demographics"); it != j->end() && !it->is_null()) {
        r.demographics = demographics_from_json(*it);
      }
      if (auto it = j->find("attributes"); it != j->end()) r.attributes = attributes_from_json(*it);
      auto id = r.user_id;
      if (!out.emplace(id, std::move(r)).second) {
        throw DataError(fmt::format("{}:{}: duplicate user '{}'", file.string(), lineno, id));
      }
    } catch (const Json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", file.string(), lineno, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", file.string(), lineno, e.what()));
    }
  }
  return out;
}

void write_panel(const fs::path& file, std::span<const PanelRecord> records) {
  std::string out;
  for (const auto& r : records) {
    Json j = Json::object();
    j["user_id"] = r.user_id;
    j["demographics"] = r.demographics ? to_json(*r.demographics) : Json(nullptr);
    j["attributes"] = attributes_json(r.attributes);
    out += j.dump();
    out += '\n';
  }
  write_text_file(file, out);
}

Json to_json(const RunManifest& m) {
  Json j = Json::object();
  j["run_id"] = m.run_id;
  j["survey_id"] = m.survey_id;
  j["protocol"] = std::string(to_string(m.protocol));
  j["backend"] = Json{{"model_name", m.backend.model_name}, {"config_hash", m.backend.config_hash}};
  j["timestamp"] = format_iso8601(m.timestamp);
  j["responses_path"] = m.responses_path;
  j["n_records"] = m.n_records;
  j["n_failures"] = m.n_failures;
  j["extra"] = m.extra;
  return j;
}

RunManifest run_manifest_from_json(const Json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.survey_id = j.at("survey_id").get<std::string>();
    auto p = parse_protocol(j.at("protocol").get<std::string>());
    if (!p) throw DataError("manifest: bad protocol");
    m.protocol = *p;
    m.backend.model_name = j.at("backend").at("model_name").get<std::string>();
    m.backend.config_hash = j.at("backend").at("config_hash").get<std::string>();
    auto ts = parse_iso8601(j.at("timestamp").get<std::string>());
    if (!ts) throw DataError("manifest: bad timestamp");
    m.timestamp = *ts;
    m.responses_path = j.at("responses_path").get<std::string>();
    m.n_records = j.at("n_records").get<std::size_t>();
    m.n_failures = j.value("n_failures", std::size_t{0});
    m.extra = j.value("extra", Json::object());
    return m;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("manifest: {}", e.what()));
  }
}

BankStore::BankStore(fs::path root, Mode mode) : root_(std::move(root)), mode_(mode) {
  if (mode_ == Mode::write) {
    fs::create_directories(root_ / "bank");
    auto lock = root_ / ".lock";
    lock_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw DataError(fmt::format("cannot open {}: {}", lock.string(), std::strerror(errno)));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(lock_fd_);
      lock_fd_ = -1;
      throw BankLockedError(fmt::format("bank {} is locked by another writer", root_.string()));
    }
  } else if (!fs::exists(root_ / "bank" / "index.json")) {
    throw DataError(fmt::format("{} is not a persona bank", root_.string()));
  }
  load_index();
  if (mode_ == Mode::write && !fs::exists(root_ / "bank" / "index.json")) save_index();
}

BankStore::~BankStore() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

void BankStore::require_writer() const {
  if (mode_ != Mode::write) throw UsageError("bank opened read-only");
}

void BankStore::load_index() {
  index_.clear();
  auto file = root_ / "bank" / "index.json";
  if (!fs::exists(file)) return;
  auto j = load_json_file(file);
  try {
    for (const auto& [user, row] : j.at("users").items()) {
      index_[user] = IndexRow{row.at("version").get<int>(), platforms_from_json(row.at("platforms"))};
    }
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("{}: {}", file.string(), e.what()));
  }
}

void BankStore::save_index() const {
  Json users = Json::object();
  for (const auto& [user, row] : index_) {
    users[user] = Json{{"version", row.version}, {"platforms", platforms_json(row.platforms)}};
  }
  Json j = Json::object();
  j["format"] = 1;
  j["users"] = std::move(users);
  auto file = root_ / "bank" / "index.json";
  auto tmp = file;
  tmp += ".tmp";
  write_text_file(tmp, j.dump(2) + "\n");
  fs::rename(tmp, file);
}

fs::path BankStore::user_dir(std::string_view user_id) const {
  check_user_id(user_id);
  return root_ / "bank" / std::string(user_id);
}

void BankStore::write_version(const BankEntry& e) const {
  auto dir = user_dir(e.user_id);
  auto k = e.version;
  write_readonly(dir / fmt::format("persona.v{}.json", k), to_json(e.profile).dump(2) + "\n");
  write_readonly(dir / fmt::format("narrative.v{}.txt", k), e.profile.narrative);
  write_readonly(dir / fmt::format("entry.v{}.json", k), entry_meta(e).dump(2) + "\n");
}

int BankStore::put_entry(BankEntry entry, bool repaint) {
  require_writer();
  check_user_id(entry.user_id);
  auto result = validate_profile(to_json(entry.profile));
  if (!result.ok()) {
    throw DataError(fmt::format("refusing invalid profile for '{}': {}", entry.user_id, describe(result.violations)));
  }
  auto it = index_.find(entry.user_id);
  if (it != index_.end()) {
    auto current = get_entry(entry.user_id);
    if (current && same_content(*current, entry)) return current->version;
    if (!repaint) throw DuplicateUserError(entry.user_id);
    entry.version = it->second.version + 1;
  } else {
    entry.version = 1;
  }
  write_version(entry);
  index_[entry.user_id] = IndexRow{entry.version, entry.platforms};
  save_index();
  return entry.version;
}

bool BankStore::contains(std::string_view user_id) const { return index_.find(user_id) != index_.end(); }

int BankStore::latest_version(std::string_view user_id) const {
  auto it = index_.find(user_id);
  return it == index_.end() ? 0 : it->second.version;
}

std::optional<BankEntry> BankStore::get_entry(std::string_view user_id) const {
  auto v = latest_version(user_id);
  if (v == 0) return std::nullopt;
  return get_entry_version(user_id, v);
}

std::optional<BankEntry> BankStore::get_entry_version(std::string_view user_id, int version) const {
  if (version < 1 || version > latest_version(user_id)) return std::nullopt;
  auto dir = user_dir(user_id);
  BankEntry e;
  try {
    apply_meta(e, load_json_file(dir / fmt::format("entry.v{}.json", version)));
  } catch (const Json::exception& ex) {
    throw DataError(fmt::format("bank entry '{}' v{}: {}", user_id, version, ex.what()));
  }
  e.profile = profile_from(load_json_file(dir / fmt::format("persona.v{}.json", version)),
                           read_text_file(dir / fmt::format("narrative.v{}.txt", version)), user_id);
  return e;
}

std::vector<BankEntry> BankStore::list_entries(std::optional<Platform> platform) const {
  std::vector<BankEntry> out;
  for (const auto& [user, row] : index_) {
    if (platform && !row.platforms.contains(*platform)) continue;
    out.push_back(*get_entry(user));
  }
  return out;
}

std::vector<std::string> BankStore::user_ids() const {
  std::vector<std::string> out;
  for (const auto& [user, row] : index_) out.push_back(user);
  return out;
}

void BankStore::put_document(const UserDocument& doc) {
  require_writer();
  write_text_file(user_dir(doc.user_id) / "document.txt", doc.body);
}

void BankStore::append_receipt(const Json& receipt) {
  require_writer();
  auto file = root_ / "receipts.jsonl";
  std::string line = receipt.dump() + "\n";
  int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw DataError(fmt::format("cannot open {}", file.string()));
  auto written = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) throw DataError(fmt::format("short write to {}", file.string()));
}

std::vector<std::string> BankStore::run_ids() const {
  std::vector<std::string> out;
  auto dir = root_ / "runs";
  if (!fs::exists(dir)) return out;
  for (const auto& d : fs::directory_iterator(dir)) {
    if (d.is_directory()) out.push_back(d.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string BankStore::record_run(RunManifest manifest, const SurveySpec& survey,
                                  std::span<const ResponseRecord> responses, std::span<const Json> failures) {
  require_writer();
  for (const auto& r : responses) {
    if (!contains(r.user_id)) throw UnknownUserError(r.user_id);
  }
  auto ids = run_ids();
  int next = 1;
  for (const auto& id : ids) {
    if (id.size() > 5 && id[0] == 'r') next = std::max(next, std::atoi(id.c_str() + 1) + 1);
  }
  manifest.run_id = fmt::format("r{:04d}-{}-{}", next, survey.survey_id, to_string(manifest.protocol));
  check_user_id(manifest.run_id);
  auto dir = root_ / "runs" / manifest.run_id;
  if (fs::exists(dir)) throw DataError(fmt::format("run {} already exists", manifest.run_id));
  manifest.responses_path = (fs::path("runs") / manifest.run_id / "responses.jsonl").string();
  manifest.n_records = responses.size();
  manifest.n_failures = failures.size();

  write_readonly(dir / "responses.jsonl", to_jsonl(responses));
  write_readonly(dir / "survey.json", to_json(survey).dump(2) + "\n");
  std::string fails;
  for (const auto& f : failures) fails += f.dump() + "\n";
  write_readonly(dir / "failures.jsonl", fails);
  write_readonly(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  return manifest.run_id;
}

std::string BankStore::run_responses_bytes(std::string_view run_id) const {
  auto dir = root_ / "runs" / std::string(run_id);
  if (run_id.empty() || !fs::exists(dir / "manifest.json")) throw UnknownRunError(std::string(run_id));
  return read_text_file(dir / "responses.jsonl");
}

StoredRun BankStore::load_run(std::string_view run_id) const {
  auto dir = root_ / "runs" / std::string(run_id);
  if (run_id.empty() || !fs::exists(dir / "manifest.json")) throw UnknownRunError(std::string(run_id));
  StoredRun run;
  run.manifest = run_manifest_from_json(load_json_file(dir / "manifest.json"));
  run.survey = survey_from_json(load_json_file(dir / "survey.json"));
  run.responses = responses_from_jsonl(read_text_file(dir / "responses.jsonl"));
  return run;
}

fs::path BankStore::weights_path(std::string_view name) const {
  check_user_id(name);
  return root_ / "weights" / fmt::format("{}.csv", name);
}

Json BankStore::export_json() const {
  Json entries = Json::array();
  for (const auto& [user, row] : index_) {
    for (int v = 1; v <= row.version; ++v) entries.push_back(to_json(*get_entry_version(user, v)));
  }
  Json j = Json::object();
  j["format"] = 1;
  j["entries"] = std::move(entries);
  return j;
}

void BankStore::import_json(const Json& bank) {
  require_writer();
  if (!index_.empty()) throw UsageError("import requires an empty bank");
  try {
    for (const auto& item : bank.at("entries")) {
      auto e = bank_entry_from_json(item);
      auto expected = latest_version(e.user_id) + 1;
      if (e.version != expected) {
        throw DataError(fmt::format("import: '{}' version {} out of sequence", e.user_id, e.version));
      }
      check_user_id(e.user_id);
      write_version(e);
      index_[e.user_id] = IndexRow{e.version, e.platforms};
    }
  } catch (const Json::exception& ex) {
    throw DataError(fmt::format("import: {}", ex.what()));
  }
  save_index();
}

}  // namespace spirit
