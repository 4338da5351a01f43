#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "latent_audit/error.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit::numerics {

/// Pre-normalization linear model: f(x) = <weights, x> + intercept.
struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double objective_value = 0.0;
  int iterations = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return weights.dot(x) + intercept; }
};

/// Exact minimizer of ||Xw + c1 - y||^2 + lambda ||w||^2 with the intercept
/// unpenalized. Throws SingularSystem when lambda == 0 and X'X (centered) is
/// rank deficient.
LinearModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

double svm_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& labels,
                     const Eigen::VectorXd& w, double intercept, double C);

/// Linear soft-margin SVM, (1/2)||w||^2 + C sum hinge(y_i (<w,x_i> + c)).
///
/// Averaged stochastic subgradient (Pegasos step schedule, suffix averaging
/// over the second half of the run) followed by an exact line search for the
/// unpenalized intercept. Labels must be -1/+1 with both classes present.
LinearModel svm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& labels, double C, int epochs,
                    RngStream& stream);

struct LogisticFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  bool converged = false;
  double final_gradient_norm = 0.0;
  int iterations = 0;
  /// Objective after each accepted Newton step, starting with the initial point.
  std::vector<double> objective_trace;
};

struct LogisticOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
};

/// Weighted L2 logistic regression with fractional targets (binomial
/// quasi-likelihood):
///
///   sum_i w_i [-e_i log mu_i - (1 - e_i) log(1 - mu_i)] + ||beta||^2 / (2 lambda)
///
/// with mu = sigmoid(beta_0 + X beta) and the intercept unpenalized. lambda
/// is the inverse penalty ("C"); lambda == 0 pins beta to zero and +inf turns
/// the penalty off. Damped Newton with backtracking, so the objective never
/// increases. Returns converged=false with the best iterate on iteration cap.
LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& e,
                         const Eigen::VectorXd& sample_weights, double lambda,
                         const LogisticOptions& options = {});

/// Objective and gradient of logistic_fit over theta = [beta_0, beta].
double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& e,
                          const Eigen::VectorXd& sample_weights, double lambda,
                          const Eigen::VectorXd& theta);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& e,
                                  const Eigen::VectorXd& sample_weights, double lambda,
                                  const Eigen::VectorXd& theta);

struct GradCheckResult {
  double max_relative_error = 0.0;
  /// Coordinates where one-sided slopes disagree at every step size; these are
  /// kinks and are excluded from max_relative_error.
  std::vector<Eigen::Index> nondifferentiable;
  bool skipped = false;  ///< every coordinate was a kink
};

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;
using GradientFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central finite differences against an analytic gradient. Relative error
/// per coordinate is |fd - g| / max(1, |fd|, |g|).
GradCheckResult grad_check(const ScalarFunction& objective, const GradientFunction& gradient,
                           const Eigen::VectorXd& point, double step = 1e-5);

double sigmoid(double x);
double logit(double p);

}  // namespace latent_audit::numerics
