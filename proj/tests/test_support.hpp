#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <random>

#include "spirit/bank_store.hpp"
#include "spirit/calibration.hpp"
#include "spirit/persona_schema.hpp"
#include "spirit/synth_fixtures.hpp"

namespace spirit::testkit {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "spirit");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Sets an environment variable for the object's lifetime.
class ScopedEnv {
 public:
  ScopedEnv(std::string name, const std::string& value);
  ~ScopedEnv();
  ScopedEnv(const ScopedEnv&) = delete;
  ScopedEnv& operator=(const ScopedEnv&) = delete;

 private:
  std::string name_;
  std::optional<std::string> previous_;
};

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args);

/// Relative path -> file bytes for every regular file below `root`.
std::map<std::string, std::string> snapshot(const std::filesystem::path& root);

/// One corrupted Painter artifact and the violation it must produce.
struct PersonaMutation {
  std::string name;
  std::string text;
  std::string path;
  ViolationKind kind;
};

/// At least thirty corruptions of the canonical artifact: missing keys, extra
/// keys, bad enums, broken separators and a few malformed values.
std::vector<PersonaMutation> persona_mutations();

/// A fully populated profile: every list non-empty, every confidence level used.
PersonaProfile canonical_profile();

struct RakingProblem {
  RespondentFrame frame;
  std::vector<MarginTarget> targets;
};

/// Random frame with every category populated; targets are the margins of a
/// random positive reweighting, so an exact solution exists.
RakingProblem random_raking_problem(std::mt19937_64& rng, std::size_t max_n = 200, int min_margins = 2,
                                    int max_margins = 4, int min_cats = 2, int max_cats = 5);

/// Reference IPF on collapsed cells (one weight per category combination)
/// in long double, iterated until the margins stop moving.
std::vector<double> oracle_ipf(const RespondentFrame& frame, std::span<const MarginTarget> targets);

/// Bank entries as the painter would produce them under the marker mock.
std::vector<BankEntry> entries_for(const synth::Population& pop);

}  // namespace spirit::testkit
