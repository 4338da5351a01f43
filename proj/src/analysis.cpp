#include "latent_audit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <boost/math/distributions/normal.hpp>

namespace latent_audit::analysis {

PruneRules PruneRules::defaults() {
  PruneRules r;
  r.ambiguous = {{"gender", {0.4, 0.6}}, {"skin", {0.4, 0.6}}, {"hair_length", {0.3, 0.5}}};
  return r;
}

namespace {

nlohmann::json intervals_to_json(const std::map<std::string, Interval>& m) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [name, iv] : m) o[name] = {iv.lo, iv.hi};
  return o;
}

std::map<std::string, Interval> intervals_from_json(const nlohmann::json& j, const char* what) {
  std::map<std::string, Interval> out;
  for (const auto& [name, v] : j.items()) {
    if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::Parse, std::string(what) + " '" + name + "' needs [lo, hi]");
    Interval iv{v[0].get<double>(), v[1].get<double>()};
    if (!(0.0 <= iv.lo && iv.lo <= iv.hi && iv.hi <= 1.0)) {
      throw Error(ErrorCode::Validation, std::string(what) + " '" + name + "' must satisfy 0 <= lo <= hi <= 1");
    }
    out.emplace(name, iv);
  }
  return out;
}

const AttributeAnnotation& annotation(const DatasetRecord& r, const std::string& attribute) {
  const AttributeAnnotation* a = r.annotations ? r.annotations->find(attribute) : nullptr;
  if (!a) throw Error(ErrorCode::MissingAttribute, "record " + r.image_id + " has no annotation for '" + attribute + "'");
  return *a;
}

}  // namespace

nlohmann::json prune_rules_to_json(const PruneRules& rules) {
  return {{"fakeness_max", rules.fakeness_max},
          {"ambiguous", intervals_to_json(rules.ambiguous)},
          {"keep", intervals_to_json(rules.keep)}};
}

PruneRules prune_rules_from_json(const nlohmann::json& j) {
  PruneRules r;
  r.ambiguous.clear();
  try {
    r.fakeness_max = j.value("fakeness_max", 0.75);
    if (j.contains("ambiguous")) r.ambiguous = intervals_from_json(j.at("ambiguous"), "ambiguous range");
    if (j.contains("keep")) r.keep = intervals_from_json(j.at("keep"), "keep range");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("prune rules: ") + e.what());
  }
  return r;
}

PruneResult prune(const AuditDataset& dataset, const PruneRules& rules) {
  PruneResult out;
  out.kept.header = dataset.header;
  out.log.input = dataset.size();
  for (const auto& r : dataset.records) {
    if (!r.annotations) throw Error(ErrorCode::MissingAttribute, "record " + r.image_id + " has no annotations");
    std::string broken;
    if (r.annotations->fakeness >= rules.fakeness_max) broken = "fakeness";
    for (const auto& [name, iv] : rules.ambiguous) {
      if (broken.empty() && iv.contains(annotation(r, name).mean_score)) broken = "ambiguous:" + name;
    }
    for (const auto& [name, iv] : rules.keep) {
      if (broken.empty() && !iv.contains(annotation(r, name).mean_score)) broken = "keep:" + name;
    }
    if (broken.empty()) {
      out.kept.records.push_back(r);
    } else {
      ++out.log.removed[broken];
    }
  }
  out.log.kept = out.kept.size();
  return out;
}

std::vector<int> binarize_target(const AuditDataset& dataset, const std::string& attribute, double threshold,
                                 std::optional<Interval> ambiguous) {
  std::vector<int> y;
  y.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    const double m = annotation(r, attribute).mean_score;
    if (ambiguous && ambiguous->contains(m)) {
      throw Error(ErrorCode::AmbiguousAfterPrune,
                  "record " + r.image_id + ": " + attribute + " mean " + std::to_string(m) + " is inside the ambiguous range");
    }
    y.push_back(m > threshold ? 1 : 0);
  }
  return y;
}

std::string to_string(LossMode mode) { return mode == LossMode::abs ? "abs" : "zero_one"; }

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "abs") return LossMode::abs;
  if (s == "zero_one") return LossMode::zero_one;
  throw Error(ErrorCode::Parse, "unknown loss mode '" + s + "'");
}

std::vector<double> error_values(const AuditDataset& dataset, const std::string& classifier,
                                 const std::vector<int>& y, const Loss& loss) {
  if (y.size() != dataset.size()) throw Error(ErrorCode::DimensionMismatch, "labels do not match dataset size");
  std::vector<double> e;
  e.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto& scores = dataset.records[i].classifier_scores;
    auto it = scores.find(classifier);
    if (it == scores.end()) {
      throw Error(ErrorCode::MissingScores,
                  "record " + dataset.records[i].image_id + " has no score from '" + classifier + "'");
    }
    if (loss.mode == LossMode::abs) {
      e.push_back(std::abs(it->second - y[i]));
    } else {
      e.push_back((it->second > loss.threshold ? 1 : 0) != y[i] ? 1.0 : 0.0);
    }
  }
  return e;
}

std::size_t CovariateMatrix::column(const std::string& label) const {
  auto it = std::find(columns.begin(), columns.end(), label);
  if (it == columns.end()) throw Error(ErrorCode::MissingAttribute, "no covariate column '" + label + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<std::size_t> CovariateMatrix::attribute_columns(const std::string& attribute) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (column_attribute[c] == attribute) out.push_back(c);
  }
  if (out.empty()) throw Error(ErrorCode::MissingAttribute, "no covariate columns for '" + attribute + "'");
  return out;
}

std::size_t CovariateMatrix::bin(std::size_t row, const std::string& attribute) const {
  for (std::size_t c : attribute_columns(attribute)) {
    if (X(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) != 0.0) return column_bin[c];
  }
  throw Error(ErrorCode::Validation, "row " + std::to_string(row) + " has no bin for '" + attribute + "'");
}

CovariateMatrix discretize(const AuditDataset& dataset, const AttributeSchema& schema,
                           const std::vector<std::string>& attributes) {
  std::vector<const AttributeDef*> defs;
  for (const auto& name : attributes) schema.at(name);
  for (const auto& a : schema.attributes) {
    if (attributes.empty() || std::find(attributes.begin(), attributes.end(), a.name) != attributes.end()) {
      defs.push_back(&a);
    }
  }
  CovariateMatrix m;
  for (const auto* d : defs) {
    for (std::size_t b = 0; b < d->bin_count(); ++b) {
      m.columns.push_back(d->name + ":" + d->bin_label(b));
      m.column_attribute.push_back(d->name);
      m.column_bin.push_back(b);
    }
  }
  m.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(m.columns.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Eigen::Index offset = 0;
    for (const auto* d : defs) {
      const double s = annotation(dataset.records[i], d->name).mean_score;
      m.X(static_cast<Eigen::Index>(i), offset + static_cast<Eigen::Index>(d->bin_of(s))) = 1.0;
      offset += static_cast<Eigen::Index>(d->bin_count());
    }
  }
  return m;
}

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence) {
  if (n < 1 || k < 0 || k > n) {
    throw Error(ErrorCode::BadCounts, "wilson interval needs 0 <= k <= n and n >= 1 (k=" + std::to_string(k) +
                                          ", n=" + std::to_string(n) + ")");
  }
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::BadCounts, "confidence must be in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  Interval iv{center - half, center + half};
  if (k == 0) iv.lo = 0.0;
  if (k == n) iv.hi = 1.0;
  iv.lo = std::clamp(std::min(iv.lo, p), 0.0, 1.0);
  iv.hi = std::clamp(std::max(iv.hi, p), 0.0, 1.0);
  return iv;
}

namespace {

Stratum finish_stratum(Stratum s, LossMode mode, double confidence) {
  if (s.n == 0) {
    s.error_rate = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.error_rate = s.error_sum / static_cast<double>(s.n);
  const double k = mode == LossMode::zero_one ? s.error_sum : std::round(s.error_sum);
  s.misclassified = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(s.n)));
  s.ci = wilson_interval(static_cast<std::int64_t>(s.misclassified), static_cast<std::int64_t>(s.n), confidence);
  return s;
}

void check_lengths(const std::vector<double>& e, const CovariateMatrix& m) {
  if (e.size() != m.rows()) throw Error(ErrorCode::DimensionMismatch, "errors do not match covariate rows");
}

}  // namespace

StratifiedTable stratified_error(const std::vector<double>& e, const CovariateMatrix& covariates,
                                 const std::string& column, LossMode mode, double confidence) {
  check_lengths(e, covariates);
  const auto c = static_cast<Eigen::Index>(covariates.column(column));
  StratifiedTable t;
  t.by = {column};
  t.approximate_counts = mode == LossMode::abs;
  std::vector<Stratum> s(2);
  for (int v = 0; v < 2; ++v) {
    s[static_cast<std::size_t>(v)].label = column + "=" + std::to_string(v);
    s[static_cast<std::size_t>(v)].levels = {{column, std::to_string(v)}};
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto& st = s[covariates.X(static_cast<Eigen::Index>(i), c) != 0.0 ? 1 : 0];
    ++st.n;
    st.error_sum += e[i];
  }
  for (auto& st : s) t.strata.push_back(finish_stratum(std::move(st), mode, confidence));
  return t;
}

StratifiedTable stratified_error(const std::vector<double>& e, const CovariateMatrix& covariates,
                                 const std::vector<std::string>& attributes, LossMode mode, double confidence) {
  check_lengths(e, covariates);
  if (attributes.empty()) throw Error(ErrorCode::Validation, "stratification needs at least one attribute");
  std::vector<std::vector<std::size_t>> cols;
  std::size_t total = 1;
  for (const auto& a : attributes) {
    cols.push_back(covariates.attribute_columns(a));
    total *= cols.back().size();
  }
  StratifiedTable t;
  t.by = attributes;
  t.approximate_counts = mode == LossMode::abs;
  std::vector<Stratum> strata(total);
  for (std::size_t g = 0; g < total; ++g) {
    std::size_t rest = g;
    std::vector<std::string> parts(attributes.size());
    for (std::size_t k = attributes.size(); k-- > 0;) {
      const std::size_t c = cols[k][rest % cols[k].size()];
      rest /= cols[k].size();
      const std::string& label = covariates.columns[c];
      parts[k] = label;
      strata[g].levels[attributes[k]] = label.substr(attributes[k].size() + 1);
    }
    for (std::size_t k = 0; k < parts.size(); ++k) strata[g].label += (k ? "|" : "") + parts[k];
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    std::size_t g = 0;
    for (std::size_t k = 0; k < attributes.size(); ++k) {
      std::size_t local = 0;
      for (std::size_t b = 0; b < cols[k].size(); ++b) {
        if (covariates.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[k][b])) != 0.0) local = b;
      }
      g = g * cols[k].size() + local;
    }
    ++strata[g].n;
    strata[g].error_sum += e[i];
  }
  for (auto& s : strata) t.strata.push_back(finish_stratum(std::move(s), mode, confidence));
  return t;
}

double AteFit::coefficient(const std::string& column) const {
  auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw Error(ErrorCode::MissingAttribute, "no coefficient for '" + column + "'");
  return beta[it - columns.begin()];
}

PatternTable compress_patterns(const Eigen::MatrixXd& X) {
  PatternTable t;
  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::vector<double>> rows;
  t.row_pattern.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index c = 0; c < X.cols(); ++c) key[static_cast<std::size_t>(c)] = X(i, c);
    auto [it, inserted] = index.emplace(key, rows.size());
    if (inserted) rows.push_back(std::move(key));
    t.row_pattern.push_back(it->second);
  }
  t.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t p = 0; p < rows.size(); ++p) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) t.X(static_cast<Eigen::Index>(p), c) = rows[p][static_cast<std::size_t>(c)];
  }
  return t;
}

namespace {

// Fit on patterns given per-pattern total weight and weighted error sum.
numerics::LogisticFit fit_patterns(const Eigen::MatrixXd& P, const Eigen::VectorXd& weight,
                                   const Eigen::VectorXd& error_sum, double lambda) {
  std::vector<Eigen::Index> used;
  for (Eigen::Index p = 0; p < P.rows(); ++p) {
    if (weight[p] > 0.0) used.push_back(p);
  }
  const auto m = static_cast<Eigen::Index>(used.size());
  Eigen::MatrixXd X(m, P.cols());
  Eigen::VectorXd w(m);
  Eigen::VectorXd e(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index p = used[static_cast<std::size_t>(i)];
    X.row(i) = P.row(p);
    w[i] = weight[p];
    e[i] = std::clamp(error_sum[p] / weight[p], 0.0, 1.0);
  }
  return numerics::logistic_fit(X, e, w, lambda);
}

void check_errors(const std::vector<double>& e) {
  for (double v : e) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::Validation, "error values must lie in [0, 1]");
  }
}

}  // namespace

AteFit fit_ate(const CovariateMatrix& covariates, const std::vector<double>& e, double lambda) {
  check_lengths(e, covariates);
  if (e.empty()) throw Error(ErrorCode::Validation, "fit_ate needs a nonempty covariate matrix");
  check_errors(e);
  const PatternTable pt = compress_patterns(covariates.X);
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(pt.X.rows());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(pt.X.rows());
  for (std::size_t i = 0; i < e.size(); ++i) {
    weight[static_cast<Eigen::Index>(pt.row_pattern[i])] += 1.0;
    sum[static_cast<Eigen::Index>(pt.row_pattern[i])] += e[i];
  }
  const auto fit = fit_patterns(pt.X, weight, sum, lambda);
  AteFit out;
  out.columns = covariates.columns;
  out.beta = fit.coefficients;
  out.intercept = fit.intercept;
  out.converged = fit.converged;
  out.iterations = fit.iterations;
  out.gradient_norm = fit.final_gradient_norm;
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

struct Replicate {
  std::optional<Eigen::VectorXd> beta;
  std::string error;
};

struct BootstrapSetup {
  PatternTable patterns;
  std::vector<double> e;
  double lambda = 1.0;
};

Replicate run_replicate(const BootstrapSetup& s, const RngStream& stream, int r) {
  Replicate out;
  try {
    RngStream rs = stream.child(std::to_string(r));
    const auto rows = s.patterns.X.rows();
    Eigen::VectorXd weight = Eigen::VectorXd::Zero(rows);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows);
    const auto n = static_cast<std::uint64_t>(s.e.size());
    for (std::uint64_t draw = 0; draw < n; ++draw) {
      const auto i = static_cast<std::size_t>(rs.uniform_index(n));
      weight[static_cast<Eigen::Index>(s.patterns.row_pattern[i])] += 1.0;
      sum[static_cast<Eigen::Index>(s.patterns.row_pattern[i])] += s.e[i];
    }
    auto fit = fit_patterns(s.patterns.X, weight, sum, s.lambda);
    if (!fit.converged) {
      out.error = "solver did not converge (gradient norm " + std::to_string(fit.final_gradient_norm) + ")";
    } else {
      out.beta = std::move(fit.coefficients);
    }
  } catch (const std::exception& ex) {
    out.error = ex.what();
  }
  return out;
}

BootstrapSetup setup(const CovariateMatrix& covariates, const std::vector<double>& e, int replicates, double lambda) {
  check_lengths(e, covariates);
  if (replicates < 2) throw Error(ErrorCode::Validation, "bootstrap needs at least 2 replicates");
  if (e.empty()) throw Error(ErrorCode::Validation, "bootstrap needs a nonempty covariate matrix");
  check_errors(e);
  return {compress_patterns(covariates.X), e, lambda};
}

BootstrapResult summarize(const CovariateMatrix& covariates, std::vector<Replicate>& reps) {
  BootstrapResult out;
  out.columns = covariates.columns;
  out.replicates = reps.size();
  std::vector<const Eigen::VectorXd*> ok;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    if (reps[r].beta) {
      ok.push_back(&*reps[r].beta);
    } else {
      ++out.failed;
      out.failures.push_back("replicate " + std::to_string(r) + ": " + reps[r].error);
    }
  }
  if (static_cast<double>(out.failed) > 0.01 * static_cast<double>(reps.size()) || ok.size() < 2) {
    throw Error(ErrorCode::BootstrapFailure, std::to_string(out.failed) + " of " + std::to_string(reps.size()) +
                                                 " bootstrap replicates failed" +
                                                 (out.failures.empty() ? "" : "; first: " + out.failures.front()));
  }
  const auto p = static_cast<Eigen::Index>(covariates.columns.size());
  out.mean = Eigen::VectorXd::Zero(p);
  out.std = Eigen::VectorXd::Zero(p);
  out.lo = Eigen::VectorXd::Zero(p);
  out.hi = Eigen::VectorXd::Zero(p);
  std::vector<double> col(ok.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < ok.size(); ++r) {
      col[r] = (*ok[r])[j];
      mean += col[r];
    }
    mean /= static_cast<double>(ok.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    std::sort(col.begin(), col.end());
    out.mean[j] = mean;
    out.std[j] = std::sqrt(ss / static_cast<double>(ok.size() - 1));
    out.lo[j] = quantile_sorted(col, 0.025);
    out.hi[j] = quantile_sorted(col, 0.975);
  }
  return out;
}

}  // namespace

BootstrapResult bootstrap_ate(const CovariateMatrix& covariates, const std::vector<double>& e, int replicates,
                              double lambda, const RngStream& stream) {
  const BootstrapSetup s = setup(covariates, e, replicates, lambda);
  std::vector<Replicate> reps(static_cast<std::size_t>(replicates));
#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < replicates; ++r) reps[static_cast<std::size_t>(r)] = run_replicate(s, stream, r);
  return summarize(covariates, reps);
}

BootstrapResult bootstrap_ate_serial(const CovariateMatrix& covariates, const std::vector<double>& e,
                                     int replicates, double lambda, const RngStream& stream) {
  const BootstrapSetup s = setup(covariates, e, replicates, lambda);
  std::vector<Replicate> reps(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) reps[static_cast<std::size_t>(r)] = run_replicate(s, stream, r);
  return summarize(covariates, reps);
}

double cramers_v(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t levels_a,
                 std::size_t levels_b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cramers_v inputs differ in length");
  if (a.empty()) return 0.0;
  std::vector<double> table(levels_a * levels_b, 0.0);
  std::vector<double> ra(levels_a, 0.0);
  std::vector<double> rb(levels_b, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[a[i] * levels_b + b[i]] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const auto used_a = std::count_if(ra.begin(), ra.end(), [](double v) { return v > 0.0; });
  const auto used_b = std::count_if(rb.begin(), rb.end(), [](double v) { return v > 0.0; });
  const auto k = std::min(used_a, used_b);
  if (k < 2) return 0.0;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < levels_a; ++i) {
    for (std::size_t j = 0; j < levels_b; ++j) {
      const double expected = ra[i] * rb[j] / n;
      if (expected > 0.0) {
        const double d = table[i * levels_b + j] - expected;
        chi2 += d * d / expected;
      }
    }
  }
  return std::sqrt(chi2 / (n * static_cast<double>(k - 1)));
}

BalanceReport balance_report(const CovariateMatrix& covariates, const AttributeSchema& schema,
                             const std::vector<std::string>& group_by, const std::vector<std::string>& report) {
  BalanceReport out;
  out.group_by = group_by;
  out.report = report;
  const std::size_t n = covariates.rows();

  std::vector<std::string> involved;
  for (const auto* list : {&group_by, &report}) {
    for (const auto& a : *list) {
      if (std::find(involved.begin(), involved.end(), a) == involved.end()) involved.push_back(a);
    }
  }
  std::map<std::string, std::vector<std::size_t>> bins;
  for (const auto& a : involved) {
    auto& v = bins[a];
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.push_back(covariates.bin(i, a));
  }

  std::size_t total = 1;
  for (const auto& a : group_by) total *= schema.at(a).bin_count();
  out.groups.resize(total);
  for (std::size_t g = 0; g < total; ++g) {
    auto& grp = out.groups[g];
    std::size_t rest = g;
    std::vector<std::string> parts(group_by.size());
    for (std::size_t k = group_by.size(); k-- > 0;) {
      const auto& def = schema.at(group_by[k]);
      const std::size_t b = rest % def.bin_count();
      rest /= def.bin_count();
      grp.levels[def.name] = def.bin_label(b);
      parts[k] = def.name + ":" + def.bin_label(b);
    }
    for (std::size_t k = 0; k < parts.size(); ++k) grp.label += (k ? "|" : "") + parts[k];
    if (group_by.empty()) grp.label = "all";
    for (const auto& a : report) grp.counts[a].assign(schema.at(a).bin_count(), 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t g = 0;
    for (const auto& a : group_by) g = g * schema.at(a).bin_count() + bins[a][i];
    auto& grp = out.groups[g];
    ++grp.n;
    for (const auto& a : report) ++grp.counts[a][bins[a][i]];
  }
  for (auto& grp : out.groups) {
    for (const auto& [a, counts] : grp.counts) {
      auto& h = grp.histograms[a];
      for (std::size_t c : counts) h.push_back(grp.n ? static_cast<double>(c) / static_cast<double>(grp.n) : 0.0);
    }
  }

  std::vector<std::string> ordered;
  for (const auto& def : schema.attributes) {
    if (bins.contains(def.name)) ordered.push_back(def.name);
  }
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    for (std::size_t j = i + 1; j < ordered.size(); ++j) {
      const auto& a = schema.at(ordered[i]);
      const auto& b = schema.at(ordered[j]);
      out.cramers_v.push_back({a.name, b.name, cramers_v(bins[a.name], bins[b.name], a.bin_count(), b.bin_count())});
    }
  }
  return out;
}

}  // namespace latent_audit::analysis
