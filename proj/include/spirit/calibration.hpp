#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spirit/bank_store.hpp"
#include "spirit/kernels.hpp"
#include "spirit/survey.hpp"

namespace spirit {

/// Target proportions for one raking variable, in file order.
struct MarginTarget {
  std::string variable;
  std::vector<std::pair<std::string, double>> categories;

  bool operator==(const MarginTarget&) const = default;
};

class InvalidTargetError : public DataError {
 public:
  using DataError::DataError;
};

/// A target category with no sample mass.
class EmptyCategoryError : public DataError {
 public:
  EmptyCategoryError(std::string variable, std::string category);
  const std::string& variable() const { return variable_; }
  const std::string& category() const { return category_; }

 private:
  std::string variable_;
  std::string category_;
};

/// A respondent category that the targets do not list.
class UnknownCategoryError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateFrameError : public DataError {
 public:
  using DataError::DataError;
};

class MissingWeightError : public DataError {
 public:
  using DataError::DataError;
};

/// Proportions must be positive and sum to 1 within 1e-9; variables and categories unique.
void check_targets(std::span<const MarginTarget> targets);

/// {"variable": {"category": proportion, ...}, ...}
std::vector<MarginTarget> targets_from_json(const Json& j);
Json to_json(std::span<const MarginTarget> targets);
std::vector<MarginTarget> load_targets(const std::filesystem::path& file);

/// Category assignment per respondent for each raking variable.
struct RespondentFrame {
  std::vector<std::string> ids;
  std::map<std::string, std::vector<std::string>> columns;  // variable -> category per respondent

  std::size_t size() const { return ids.size(); }
  /// Appends a respondent; `categories` must name every column already present.
  void add(std::string id, const std::map<std::string, std::string>& categories);
};

/// "18-29", "30-44", "45-64", "65+"; nullopt below 18.
std::optional<std::string> age_group(int age);

/// Category of `variable` for an entry: an explicit attribute wins, then the
/// demographics (age_group is derived from age).
std::optional<std::string> entry_category(const BankEntry& e, std::string_view variable);

struct FrameBuild {
  RespondentFrame frame;
  std::vector<std::string> excluded;  // ids lacking a category for some variable
  std::vector<std::string> warnings;
};

FrameBuild build_frame(std::span<const BankEntry> entries, std::span<const std::string> variables);

enum class Convergence {
  factor_delta,  // max |T/P - 1| over a cycle
  weight_delta,  // max |w_new - w_old| over a cycle
};

struct RakeOptions {
  double tol = 0.001;
  int max_iter = 50;
  Convergence criterion = Convergence::factor_delta;
  kernels::Execution execution = kernels::Execution::parallel;
  int threads = 0;
};

struct WeightVector {
  std::vector<std::string> ids;
  std::vector<double> weights;
  int iterations = 0;
  bool converged = false;
  double max_adjustment = 0.0;  // last cycle's value of the convergence metric

  bool operator==(const WeightVector&) const = default;
  std::map<std::string, double> by_id() const;
};

/// Iterative proportional fitting from unit weights, cycling the targets in order.
WeightVector rake(const RespondentFrame& frame, std::span<const MarginTarget> targets, const RakeOptions& opts = {});

/// w / mean(w).
WeightVector normalize(WeightVector w);

/// Weighted share of each target category among the frame.
std::map<std::string, std::map<std::string, double>> weighted_margins(const RespondentFrame& frame,
                                                                     std::span<const double> weights);

struct WeightDiagnostics {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // population
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double max = 0.0;
  std::vector<std::string> warnings;
};

/// Quantiles interpolate linearly between order statistics. A warning fires
/// when the largest weight exceeds `cap` (0 disables).
WeightDiagnostics weight_diagnostics(const WeightVector& w, double cap = 10.0);
Json to_json(const WeightDiagnostics& d);

/// Code -> share over every option of `q`; responses to other questions are ignored.
std::map<int, double> weighted_distribution(std::span<const ResponseRecord> responses, const WeightVector& w,
                                            const SurveyQuestion& q,
                                            kernels::Execution execution = kernels::Execution::parallel);
std::map<int, double> unweighted_distribution(std::span<const ResponseRecord> responses, const SurveyQuestion& q);

/// "respondent_id,weight" with round-trip precision.
void write_weights_csv(const std::filesystem::path& file, const WeightVector& w);
WeightVector read_weights_csv(const std::filesystem::path& file);

}  // namespace spirit
