#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "latent_audit/core.hpp"
#include "latent_audit/numerics.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit::analysis {

/// Closed interval on the normalized [0, 1] scale.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct PruneRules {
  /// Images with mean fakeness >= fakeness_max are removed.
  double fakeness_max = 0.75;
  /// Mean scores inside these closed intervals are removed.
  std::map<std::string, Interval> ambiguous;
  /// Mean scores outside these closed intervals are removed.
  std::map<std::string, Interval> keep;

  /// 0.75 fakeness; gender and skin ambiguous on [0.4, 0.6]; hair_length on [0.3, 0.5].
  static PruneRules defaults();
};

nlohmann::json prune_rules_to_json(const PruneRules& rules);
PruneRules prune_rules_from_json(const nlohmann::json& j);

/// Rule keys: "fakeness", "ambiguous:<attr>", "keep:<attr>". A removed record
/// is charged to the first rule it breaks, in that order (attributes sorted).
struct PruneLog {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> removed;
};

struct PruneResult {
  AuditDataset kept;
  PruneLog log;
};

PruneResult prune(const AuditDataset& dataset, const PruneRules& rules);

/// y = 1 iff mean score > threshold. Throws AmbiguousAfterPrune for a mean
/// inside `ambiguous` (the rules let an ambiguous record through).
std::vector<int> binarize_target(const AuditDataset& dataset, const std::string& attribute, double threshold = 0.5,
                                 std::optional<Interval> ambiguous = std::nullopt);

enum class LossMode { abs, zero_one };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

struct Loss {
  LossMode mode = LossMode::zero_one;
  double threshold = 0.5;
};

/// abs: |score - y|; zero_one: 1 iff (score > threshold) != y.
std::vector<double> error_values(const AuditDataset& dataset, const std::string& classifier,
                                 const std::vector<int>& y, const Loss& loss);

/// Full one-hot encoding of binned mean scores.
struct CovariateMatrix {
  std::vector<std::string> columns;           ///< "attribute:bin_label"
  std::vector<std::string> column_attribute;  ///< attribute of each column
  std::vector<std::size_t> column_bin;
  Eigen::MatrixXd X;  ///< rows x columns, entries 0 or 1

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t column(const std::string& label) const;
  std::vector<std::size_t> attribute_columns(const std::string& attribute) const;
  /// Bin index of `attribute` in a row.
  std::size_t bin(std::size_t row, const std::string& attribute) const;
};

/// Columns follow schema order, then bin order. Restrict with `attributes`
/// (kept in schema order); empty means all.
CovariateMatrix discretize(const AuditDataset& dataset, const AttributeSchema& schema,
                           const std::vector<std::string>& attributes = {});

struct Stratum {
  std::string label;                   ///< e.g. "skin:dark" or "gender:female|skin:dark"
  std::map<std::string, std::string> levels;
  std::size_t n = 0;
  double error_sum = 0.0;
  double error_rate = 0.0;             ///< NaN when n == 0
  std::size_t misclassified = 0;       ///< Wilson successes
  std::optional<Interval> ci;          ///< absent when n == 0
};

struct StratifiedTable {
  std::vector<std::string> by;
  std::vector<Stratum> strata;
  /// Wilson counts are round(sum e) rather than exact (abs loss).
  bool approximate_counts = false;
};

/// Strata s = 0, 1 of one covariate column.
StratifiedTable stratified_error(const std::vector<double>& e, const CovariateMatrix& covariates,
                                 const std::string& column, LossMode mode, double confidence = 0.95);

/// Every combination of bins of the given attributes (last attribute fastest).
StratifiedTable stratified_error(const std::vector<double>& e, const CovariateMatrix& covariates,
                                 const std::vector<std::string>& attributes, LossMode mode,
                                 double confidence = 0.95);

/// Wilson score interval. Throws BadCounts unless 0 <= k <= n and n >= 1.
Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence = 0.95);

struct AteFit {
  std::vector<std::string> columns;
  Eigen::VectorXd beta;
  double intercept = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;

  double coefficient(const std::string& column) const;
};

/// Rows that share a covariate pattern, merged. The quasi-likelihood is linear
/// in e for fixed pattern, so fitting on patterns with summed weights and
/// weighted-mean targets reproduces the row-level fit exactly.
struct PatternTable {
  Eigen::MatrixXd X;                   ///< unique rows
  std::vector<std::size_t> row_pattern;
};

PatternTable compress_patterns(const Eigen::MatrixXd& X);

/// L2 logistic regression of e on the covariates (lambda is the inverse penalty).
AteFit fit_ate(const CovariateMatrix& covariates, const std::vector<double>& e, double lambda = 1.0);

struct BootstrapResult {
  std::vector<std::string> columns;
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::VectorXd lo;  ///< 2.5th percentile
  Eigen::VectorXd hi;  ///< 97.5th percentile
  std::size_t replicates = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  ///< "replicate r: message"
};

/// Row resampling with replacement; replicate r draws from stream.child(r).
/// Throws BootstrapFailure when more than 1% of replicates fail.
BootstrapResult bootstrap_ate(const CovariateMatrix& covariates, const std::vector<double>& e, int replicates,
                              double lambda, const RngStream& stream);

/// Single-threaded reference for bootstrap_ate.
BootstrapResult bootstrap_ate_serial(const CovariateMatrix& covariates, const std::vector<double>& e,
                                     int replicates, double lambda, const RngStream& stream);

/// Type-7 (linear interpolation) sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p);

struct BalanceGroup {
  std::string label;
  std::map<std::string, std::string> levels;
  std::size_t n = 0;
  std::map<std::string, std::vector<std::size_t>> counts;
  std::map<std::string, std::vector<double>> histograms;  ///< counts / n
};

struct CramersV {
  std::string a;
  std::string b;
  double value = 0.0;
};

struct BalanceReport {
  std::vector<std::string> group_by;
  std::vector<std::string> report;
  std::vector<BalanceGroup> groups;
  std::vector<CramersV> cramers_v;  ///< every pair of attributes in group_by + report
};

BalanceReport balance_report(const CovariateMatrix& covariates, const AttributeSchema& schema,
                             const std::vector<std::string>& group_by, const std::vector<std::string>& report);

/// Cramér's V of two binned variables; 0 when either is constant.
double cramers_v(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t levels_a,
                 std::size_t levels_b);

}  // namespace latent_audit::analysis
