#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "latent_audit/analysis.hpp"

namespace latent_audit {

struct AuditConfig {
  std::string classifier;
  std::string target = "gender";
  /// Human labels: y = 1 iff the target's mean score exceeds this.
  double target_threshold = 0.5;
  analysis::Loss loss;
  double lambda = 1.0;
  /// 0 skips the bootstrap.
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  /// Multi-attribute stratifications, e.g. {{"gender", "hair_length", "skin"}}.
  std::vector<std::vector<std::string>> intersections;
  /// Balance grouping; empty means {target}.
  std::vector<std::string> balance_group_by;
};

struct AteRow {
  std::string column;
  double beta = 0.0;
  double std = 0.0;  ///< NaN without bootstrap
  double lo = 0.0;
  double hi = 0.0;
};

struct BiasReport {
  AuditConfig config;
  analysis::PruneRules rules;
  analysis::PruneLog prune_log;
  std::size_t n = 0;
  double overall_error = 0.0;
  std::vector<analysis::StratifiedTable> stratified;
  double intercept = 0.0;
  bool ate_converged = false;
  std::vector<AteRow> ate;
  std::size_t bootstrap_failed = 0;
  analysis::BalanceReport balance;

  const AteRow& ate_row(const std::string& column) const;
  const analysis::Stratum& stratum(const std::string& label) const;
};

/// prune, binarize, error, discretize, stratify, balance, fit, bootstrap.
BiasReport run_audit(const AuditDataset& dataset, const analysis::PruneRules& rules, const AuditConfig& config);

nlohmann::json report_to_json(const BiasReport& report);
std::string report_to_text(const BiasReport& report);
std::string stratified_csv(const BiasReport& report);
std::string ate_csv(const BiasReport& report);
/// One row per (table, group, metric, value) for external charting.
std::string long_csv(const BiasReport& report);

}  // namespace latent_audit
