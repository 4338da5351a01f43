#include "latent_audit/report.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "latent_audit/dataset_io.hpp"

namespace latent_audit {

using namespace analysis;

const AteRow& BiasReport::ate_row(const std::string& column) const {
  for (const auto& r : ate) {
    if (r.column == column) return r;
  }
  throw Error(ErrorCode::MissingAttribute, "report has no coefficient '" + column + "'");
}

const Stratum& BiasReport::stratum(const std::string& label) const {
  for (const auto& t : stratified) {
    for (const auto& s : t.strata) {
      if (s.label == label) return s;
    }
  }
  throw Error(ErrorCode::MissingAttribute, "report has no stratum '" + label + "'");
}

BiasReport run_audit(const AuditDataset& dataset, const PruneRules& rules, const AuditConfig& config) {
  if (config.classifier.empty()) throw Error(ErrorCode::Validation, "audit needs a classifier name");
  const AttributeSchema& schema = dataset.header.schema;
  schema.at(config.target);

  BiasReport rep;
  rep.config = config;
  rep.rules = rules;
  auto pruned = prune(dataset, rules);
  rep.prune_log = pruned.log;
  const AuditDataset& kept = pruned.kept;
  rep.n = kept.size();
  if (kept.empty()) throw Error(ErrorCode::Validation, "no records left after pruning");

  std::optional<Interval> ambiguous;
  if (auto it = rules.ambiguous.find(config.target); it != rules.ambiguous.end()) ambiguous = it->second;
  const auto y = binarize_target(kept, config.target, config.target_threshold, ambiguous);
  const auto e = error_values(kept, config.classifier, y, config.loss);
  rep.overall_error = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());

  const CovariateMatrix cov = discretize(kept, schema);
  for (const auto& column : cov.columns) rep.stratified.push_back(stratified_error(e, cov, column, config.loss.mode));
  for (const auto& group : config.intersections) {
    rep.stratified.push_back(stratified_error(e, cov, group, config.loss.mode));
  }

  std::vector<std::string> group_by = config.balance_group_by;
  if (group_by.empty()) group_by.push_back(config.target);
  std::vector<std::string> reported;
  for (const auto& a : schema.attributes) {
    if (std::find(group_by.begin(), group_by.end(), a.name) == group_by.end()) reported.push_back(a.name);
  }
  rep.balance = balance_report(cov, schema, group_by, reported);

  const AteFit fit = fit_ate(cov, e, config.lambda);
  rep.intercept = fit.intercept;
  rep.ate_converged = fit.converged;
  std::optional<BootstrapResult> boot;
  if (config.bootstrap > 0) {
    boot = bootstrap_ate(cov, e, config.bootstrap, config.lambda, derive_stream(config.seed, "bootstrap"));
    rep.bootstrap_failed = boot->failed;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < cov.columns.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    rep.ate.push_back({cov.columns[j], fit.beta[k], boot ? boot->std[k] : nan, boot ? boot->lo[k] : nan,
                       boot ? boot->hi[k] : nan});
  }
  return rep;
}

namespace {

nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json stratum_json(const Stratum& s) {
  nlohmann::json o{{"label", s.label},
                   {"levels", s.levels},
                   {"n", s.n},
                   {"error_sum", s.error_sum},
                   {"error_rate", num(s.error_rate)},
                   {"misclassified", s.misclassified}};
  if (s.ci) {
    o["ci"] = {s.ci->lo, s.ci->hi};
  } else {
    o["ci"] = nullptr;
  }
  return o;
}

std::string fmt_real(double v, int decimals = 4) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

nlohmann::json report_to_json(const BiasReport& report) {
  const auto& c = report.config;
  nlohmann::json strat = nlohmann::json::array();
  for (const auto& t : report.stratified) {
    nlohmann::json strata = nlohmann::json::array();
    for (const auto& s : t.strata) strata.push_back(stratum_json(s));
    strat.push_back({{"by", t.by}, {"approximate_counts", t.approximate_counts}, {"strata", std::move(strata)}});
  }
  nlohmann::json ate = nlohmann::json::array();
  for (const auto& r : report.ate) {
    ate.push_back({{"column", r.column}, {"beta", r.beta}, {"std", num(r.std)}, {"ci", {num(r.lo), num(r.hi)}}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.balance.groups) {
    groups.push_back({{"label", g.label}, {"levels", g.levels}, {"n", g.n}, {"counts", g.counts}, {"histograms", g.histograms}});
  }
  nlohmann::json cv = nlohmann::json::array();
  for (const auto& v : report.balance.cramers_v) cv.push_back({{"a", v.a}, {"b", v.b}, {"value", v.value}});

  return {
      {"config",
       {{"classifier", c.classifier},
        {"target", c.target},
        {"target_threshold", c.target_threshold},
        {"loss", to_string(c.loss.mode)},
        {"threshold", c.loss.threshold},
        {"lambda", c.lambda},
        {"bootstrap", c.bootstrap},
        {"seed", c.seed},
        {"intersections", c.intersections}}},
      {"prune", {{"rules", prune_rules_to_json(report.rules)},
                 {"input", report.prune_log.input},
                 {"kept", report.prune_log.kept},
                 {"removed", report.prune_log.removed}}},
      {"n", report.n},
      {"overall_error", report.overall_error},
      {"stratified", std::move(strat)},
      {"ate", {{"intercept", report.intercept},
               {"converged", report.ate_converged},
               {"bootstrap_failed", report.bootstrap_failed},
               {"coefficients", std::move(ate)}}},
      {"balance", {{"group_by", report.balance.group_by},
                   {"report", report.balance.report},
                   {"groups", std::move(groups)},
                   {"cramers_v", std::move(cv)}}},
  };
}

std::string report_to_text(const BiasReport& report) {
  std::ostringstream out;
  const auto& c = report.config;
  char line[256];
  out << "classifier " << c.classifier << ", target " << c.target << ", loss " << to_string(c.loss.mode);
  if (c.loss.mode == LossMode::zero_one) out << " (threshold " << fmt_real(c.loss.threshold, 2) << ")";
  out << ", lambda " << fmt_real(c.lambda, 3) << ", bootstrap " << c.bootstrap << ", seed " << c.seed << "\n";
  out << "pruned " << report.prune_log.input - report.prune_log.kept << " of " << report.prune_log.input;
  for (const auto& [rule, count] : report.prune_log.removed) out << "; " << rule << " " << count;
  out << "\noverall error " << fmt_real(report.overall_error) << " over " << report.n << " images\n\n";

  out << "stratified error" << (c.loss.mode == LossMode::abs ? " (counts rounded from abs error)" : "") << "\n";
  std::snprintf(line, sizeof line, "  %-44s %8s %8s %17s %10s\n", "group", "n", "error", "95% CI", "errors");
  out << line;
  for (const auto& t : report.stratified) {
    for (const auto& s : t.strata) {
      const std::string ci = s.ci ? fmt_real(s.ci->lo, 3) + "-" + fmt_real(s.ci->hi, 3) : "NA";
      std::snprintf(line, sizeof line, "  %-44s %8zu %8s %17s %10zu\n", s.label.c_str(), s.n,
                    fmt_real(s.error_rate).c_str(), ci.c_str(), s.misclassified);
      out << line;
    }
  }

  out << "\nlogistic coefficients (intercept " << fmt_real(report.intercept) << ")\n";
  std::snprintf(line, sizeof line, "  %-28s %9s %9s %21s\n", "covariate", "beta", "std", "95% CI");
  out << line;
  for (const auto& r : report.ate) {
    const std::string ci = fmt_real(r.lo) + " " + fmt_real(r.hi);
    std::snprintf(line, sizeof line, "  %-28s %9s %9s %21s\n", r.column.c_str(), fmt_real(r.beta).c_str(),
                  fmt_real(r.std).c_str(), ci.c_str());
    out << line;
  }

  out << "\nbalance by";
  for (const auto& g : report.balance.group_by) out << " " << g;
  out << "\n";
  for (const auto& g : report.balance.groups) {
    out << "  " << g.label << " (n=" << g.n << ")";
    for (const auto& [a, h] : g.histograms) {
      out << "  " << a << "[";
      for (std::size_t i = 0; i < h.size(); ++i) out << (i ? " " : "") << fmt_real(h[i], 2);
      out << "]";
    }
    out << "\n";
  }
  out << "  Cramer's V:";
  for (const auto& v : report.balance.cramers_v) out << " " << v.a << "/" << v.b << "=" << fmt_real(v.value, 3);
  out << "\n";
  return out.str();
}

std::string stratified_csv(const BiasReport& report) {
  std::ostringstream out;
  out << "by,group,n,error_rate,ci_lo,ci_hi,misclassified,approximate_counts\n";
  for (const auto& t : report.stratified) {
    std::string by;
    for (std::size_t i = 0; i < t.by.size(); ++i) by += (i ? "|" : "") + t.by[i];
    for (const auto& s : t.strata) {
      out << by << ',' << s.label << ',' << s.n << ',' << (s.n ? format_real(s.error_rate) : "") << ','
          << (s.ci ? format_real(s.ci->lo) : "") << ',' << (s.ci ? format_real(s.ci->hi) : "") << ','
          << s.misclassified << ',' << (t.approximate_counts ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string ate_csv(const BiasReport& report) {
  std::ostringstream out;
  out << "covariate,beta,std,ci_lo,ci_hi\n";
  auto cell = [](double v) { return std::isfinite(v) ? format_real(v) : std::string(); };
  for (const auto& r : report.ate) {
    out << r.column << ',' << format_real(r.beta) << ',' << cell(r.std) << ',' << cell(r.lo) << ',' << cell(r.hi)
        << '\n';
  }
  return out.str();
}

std::string long_csv(const BiasReport& report) {
  std::ostringstream out;
  out << "table,group,metric,value\n";
  auto row = [&](const std::string& table, const std::string& group, const std::string& metric, double v) {
    if (std::isfinite(v)) out << table << ',' << group << ',' << metric << ',' << format_real(v) << '\n';
  };
  for (const auto& t : report.stratified) {
    for (const auto& s : t.strata) {
      row("stratified", s.label, "n", static_cast<double>(s.n));
      row("stratified", s.label, "error_rate", s.error_rate);
      if (s.ci) {
        row("stratified", s.label, "ci_lo", s.ci->lo);
        row("stratified", s.label, "ci_hi", s.ci->hi);
      }
    }
  }
  for (const auto& r : report.ate) {
    row("ate", r.column, "beta", r.beta);
    row("ate", r.column, "std", r.std);
    row("ate", r.column, "ci_lo", r.lo);
    row("ate", r.column, "ci_hi", r.hi);
  }
  for (const auto& g : report.balance.groups) {
    for (const auto& [a, h] : g.histograms) {
      for (std::size_t b = 0; b < h.size(); ++b) row("balance", g.label, a + ":" + std::to_string(b), h[b]);
    }
  }
  for (const auto& v : report.balance.cramers_v) row("cramers_v", v.a + "|" + v.b, "value", v.value);
  return out.str();
}

}  // namespace latent_audit
