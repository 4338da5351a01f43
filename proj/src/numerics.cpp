#include "latent_audit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace latent_audit::numerics {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

void check_finite(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (!X.allFinite() || !y.allFinite()) throw Error(ErrorCode::Validation, "non-finite input to solver");
  if (X.rows() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "design matrix has " + std::to_string(X.rows()) +
                                                  " rows but target has " + std::to_string(y.size()));
  }
}

// -log(sigmoid(x)), stable for large |x|.
double softplus_neg(double x) { return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace

LinearModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  check_finite(X, y);
  if (X.rows() < 1) throw Error(ErrorCode::Validation, "ridge_fit needs at least one row");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::Validation, "ridge lambda must be finite and >= 0");

  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = Xc.transpose() * yc;

  Eigen::VectorXd w;
  if (lambda == 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax == 0.0 || d.minCoeff() <= 1e-12 * dmax) {
      throw Error(ErrorCode::SingularSystem, "X'X is rank deficient and lambda is 0");
    }
    w = ldlt.solve(rhs);
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "ridge system not positive definite");
    w = llt.solve(rhs);
  }

  LinearModel m;
  m.weights = std::move(w);
  m.intercept = y_mean - x_mean.dot(m.weights);
  const Eigen::VectorXd resid = (X * m.weights).array() + m.intercept - y.array();
  m.objective_value = resid.squaredNorm() + lambda * m.weights.squaredNorm();
  m.iterations = 1;
  return m;
}

double svm_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& labels, const Eigen::VectorXd& w,
                     double intercept, double C) {
  const Eigen::VectorXd margins = labels.cwiseProduct((X * w).array().matrix() + Eigen::VectorXd::Constant(X.rows(), intercept));
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) hinge += std::max(0.0, 1.0 - margins[i]);
  return 0.5 * w.squaredNorm() + C * hinge;
}

namespace {

// Exact minimizer over the intercept of sum_i max(0, 1 - y_i (s_i + c)).
// The sum is convex and piecewise linear with breakpoints c = y_i - s_i, so
// the minimum sits at a breakpoint; bisection over the sorted breakpoints.
double best_intercept(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels, double current) {
  const Eigen::Index n = scores.size();
  std::vector<double> breaks(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) breaks[static_cast<std::size_t>(i)] = labels[i] - scores[i];
  std::sort(breaks.begin(), breaks.end());
  auto loss = [&](double c) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::max(0.0, 1.0 - labels[i] * (scores[i] + c));
    return s;
  };
  std::size_t lo = 0;
  std::size_t hi = breaks.size() - 1;
  while (hi - lo > 2) {
    const std::size_t m1 = lo + (hi - lo) / 3;
    const std::size_t m2 = hi - (hi - lo) / 3;
    if (loss(breaks[m1]) <= loss(breaks[m2])) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  double best = current;
  double best_loss = loss(current);
  for (std::size_t k = lo; k <= hi; ++k) {
    const double l = loss(breaks[k]);
    if (l < best_loss) {
      best_loss = l;
      best = breaks[k];
    }
  }
  return best;
}

}  // namespace

LinearModel svm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& labels, double C, int epochs,
                    RngStream& stream) {
  check_finite(X, labels);
  if (!(C > 0.0)) throw Error(ErrorCode::Validation, "svm C must be > 0");
  if (epochs < 1) throw Error(ErrorCode::Validation, "svm epochs must be >= 1");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  bool has_pos = false;
  bool has_neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] == 1.0) {
      has_pos = true;
    } else if (labels[i] == -1.0) {
      has_neg = true;
    } else {
      throw Error(ErrorCode::Validation, "svm labels must be -1 or +1");
    }
  }
  if (!has_pos || !has_neg) throw Error(ErrorCode::DegenerateLabels, "svm_fit needs both classes present");

  // Pegasos form: minimize (lam/2)||w||^2 + mean hinge, lam = 1/(n C); this is
  // the SVM objective divided by n C.
  const double lam = 1.0 / (static_cast<double>(n) * C);
  const long long total = static_cast<long long>(epochs) * n;
  const long long average_from = total / 2;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double c = 0.0;
  Eigen::VectorXd w_avg = Eigen::VectorXd::Zero(d);
  double c_avg = 0.0;
  long long averaged = 0;
  // Offset in the step schedule tames the first, very large steps.
  const double t0 = 1.0 / lam;

  for (long long t = 1; t <= total; ++t) {
    const auto i = static_cast<Eigen::Index>(stream.uniform_index(static_cast<std::uint64_t>(n)));
    const double eta = 1.0 / (lam * (static_cast<double>(t) + t0));
    const double margin = labels[i] * (X.row(i).dot(w) + c);
    w *= (1.0 - eta * lam);
    if (margin < 1.0) {
      w.noalias() += (eta * labels[i]) * X.row(i).transpose();
      c += eta * labels[i];
    }
    if (t > average_from) {
      ++averaged;
      const double a = 1.0 / static_cast<double>(averaged);
      w_avg += a * (w - w_avg);
      c_avg += a * (c - c_avg);
    }
  }

  const Eigen::VectorXd scores = X * w_avg;
  c_avg = best_intercept(scores, labels, c_avg);

  LinearModel m;
  m.weights = std::move(w_avg);
  m.intercept = c_avg;
  m.objective_value = svm_objective(X, labels, m.weights, m.intercept, C);
  m.iterations = static_cast<int>(std::min<long long>(total, std::numeric_limits<int>::max()));
  return m;
}

namespace {

struct LogisticProblem {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& e;
  const Eigen::VectorXd& w;
  double penalty;  // 1/lambda, 0 when the penalty is off
  bool pinned;     // lambda == 0: beta held at zero

  Eigen::VectorXd eta(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd z = X * theta.tail(theta.size() - 1);
    z.array() += theta[0];
    return z;
  }

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd z = eta(theta);
    double f = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (w[i] == 0.0) continue;
      double term = 0.0;
      if (e[i] != 0.0) term += e[i] * softplus_neg(z[i]);
      if (e[i] != 1.0) term += (1.0 - e[i]) * softplus_neg(-z[i]);
      f += w[i] * term;
    }
    if (!pinned) f += 0.5 * penalty * theta.tail(theta.size() - 1).squaredNorm();
    return f;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd z = eta(theta);
    Eigen::VectorXd r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = w[i] * (sigmoid(z[i]) - e[i]);
    Eigen::VectorXd g(theta.size());
    g[0] = r.sum();
    g.tail(theta.size() - 1) = X.transpose() * r;
    if (pinned) {
      g.tail(theta.size() - 1).setZero();
    } else {
      g.tail(theta.size() - 1) += penalty * theta.tail(theta.size() - 1);
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd z = eta(theta);
    const Eigen::Index p = theta.size();
    Eigen::VectorXd s(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double mu = sigmoid(z[i]);
      s[i] = w[i] * mu * (1.0 - mu);
    }
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
    H(0, 0) = s.sum();
    const Eigen::VectorXd xs = X.transpose() * s;
    H.block(1, 0, p - 1, 1) = xs;
    H.block(0, 1, 1, p - 1) = xs.transpose();
    H.block(1, 1, p - 1, p - 1) = X.transpose() * s.asDiagonal() * X;
    if (pinned) {
      H.block(1, 0, p - 1, 1).setZero();
      H.block(0, 1, 1, p - 1).setZero();
      H.block(1, 1, p - 1, p - 1).setIdentity();
    } else {
      H.block(1, 1, p - 1, p - 1).diagonal().array() += penalty;
    }
    return H;
  }
};

LogisticProblem make_problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& e, const Eigen::VectorXd& w,
                             double lambda) {
  if (X.rows() != e.size() || X.rows() != w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "logistic inputs have inconsistent row counts");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::Validation, "logistic lambda must be >= 0");
  const bool pinned = lambda == 0.0;
  const double penalty = std::isinf(lambda) || pinned ? 0.0 : 1.0 / lambda;
  return LogisticProblem{X, e, w, penalty, pinned};
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& e, const Eigen::VectorXd& sample_weights,
                          double lambda, const Eigen::VectorXd& theta) {
  return make_problem(X, e, sample_weights, lambda).value(theta);
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& e,
                                  const Eigen::VectorXd& sample_weights, double lambda,
                                  const Eigen::VectorXd& theta) {
  return make_problem(X, e, sample_weights, lambda).gradient(theta);
}

LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& e, const Eigen::VectorXd& sample_weights,
                         double lambda, const LogisticOptions& options) {
  if (!X.allFinite() || !e.allFinite() || !sample_weights.allFinite()) {
    throw Error(ErrorCode::Validation, "non-finite input to logistic_fit");
  }
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    if (e[i] < 0.0 || e[i] > 1.0) throw Error(ErrorCode::Validation, "logistic targets must lie in [0,1]");
  }
  for (Eigen::Index i = 0; i < sample_weights.size(); ++i) {
    if (sample_weights[i] < 0.0) throw Error(ErrorCode::Validation, "sample weights must be >= 0");
  }
  const LogisticProblem prob = make_problem(X, e, sample_weights, lambda);
  const Eigen::Index p = X.cols() + 1;

  // Start the intercept at the weighted mean log-odds; fall back to 0 when it
  // is infinite (all targets 0 or 1).
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  const double wsum = sample_weights.sum();
  if (wsum > 0.0) {
    const double ebar = sample_weights.dot(e) / wsum;
    if (ebar > 0.0 && ebar < 1.0) theta[0] = logit(ebar);
  }

  LogisticFit fit;
  double f = prob.value(theta);
  fit.objective_trace.push_back(f);
  Eigen::VectorXd g = prob.gradient(theta);
  int iter = 0;
  while (g.norm() > options.tolerance && iter < options.max_iterations) {
    ++iter;
    const Eigen::MatrixXd H = prob.hessian(theta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(g) >= 0.0) step = -g;

    // Armijo backtracking; accept only strict non-increase.
    double t = 1.0;
    const double slope = g.dot(step);
    Eigen::VectorXd candidate;
    double fc = f;
    bool accepted = false;
    // Near the optimum the predicted decrease drops below the resolution of f;
    // there a full step is taken if f stays within rounding and |g| shrinks.
    const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
    for (int k = 0; k < 60; ++k) {
      candidate = theta + t * step;
      fc = prob.value(candidate);
      if (std::isfinite(fc) && fc <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      if (k == 0 && std::isfinite(fc) && fc <= f + roundoff && prob.gradient(candidate).norm() < g.norm()) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Line search stalled at machine precision; keep the current iterate.
      if (fc <= f && std::isfinite(fc)) {
        theta = candidate;
        f = fc;
        fit.objective_trace.push_back(f);
        g = prob.gradient(theta);
      }
      break;
    }
    theta = candidate;
    f = fc;
    fit.objective_trace.push_back(f);
    g = prob.gradient(theta);
  }

  fit.intercept = theta[0];
  fit.coefficients = theta.tail(p - 1);
  fit.final_gradient_norm = g.norm();
  fit.converged = fit.final_gradient_norm <= options.tolerance;
  fit.iterations = iter;
  return fit;
}

GradCheckResult grad_check(const ScalarFunction& objective, const GradientFunction& gradient,
                           const Eigen::VectorXd& point, double step) {
  GradCheckResult out;
  const Eigen::VectorXd analytic = gradient(point);
  const double f0 = objective(point);
  std::size_t checked = 0;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    auto shifted = [&](double h) {
      Eigen::VectorXd x = point;
      x[i] += h;
      return objective(x);
    };
    // One-sided slope gap: O(h f'') for smooth functions, O(1) at a kink.
    const double fp = shifted(step);
    const double fm = shifted(-step);
    const double gap = (fp - f0) / step - (f0 - fm) / step;
    const double fp2 = shifted(step / 2);
    const double fm2 = shifted(-step / 2);
    const double gap2 = (fp2 - f0) / (step / 2) - (f0 - fm2) / (step / 2);
    const double scale = std::max({1.0, std::abs(analytic[i])});
    if (std::abs(gap) > 1e-4 * scale && std::abs(gap2) > 0.75 * std::abs(gap)) {
      out.nondifferentiable.push_back(i);
      continue;
    }
    const double fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(fd - analytic[i]) / denom);
    ++checked;
  }
  out.skipped = checked == 0 && point.size() > 0;
  return out;
}

}  // namespace latent_audit::numerics
