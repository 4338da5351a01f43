#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "latent_audit/numerics.hpp"

using namespace latent_audit;
using namespace latent_audit::numerics;

namespace {

Eigen::MatrixXd random_matrix(RngStream& s, int n, int d) {
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) X(i, j) = s.normal();
  }
  return X;
}

// Augmented normal equations solved by explicit inverse: [1 X]' [1 X] + diag(0, lambda).
Eigen::VectorXd ridge_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  Eigen::MatrixXd M = A.transpose() * A;
  for (Eigen::Index j = 1; j < M.cols(); ++j) M(j, j) += lambda;
  return M.inverse() * (A.transpose() * y);
}

}  // namespace

TEST_CASE("ridge matches the normal-equation oracle") {
  RngStream s(3, "ridge");
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    const auto X = random_matrix(s, 60, 6);
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) y[i] = 0.3 + X(i, 0) - 2 * X(i, 3) + 0.1 * s.normal();
    const auto model = ridge_fit(X, y, lambda);
    const auto theta = ridge_oracle(X, y, lambda);
    CHECK(std::abs(model.intercept - theta[0]) < 1e-10);
    CHECK((model.weights - theta.tail(6)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ridge with lambda 0 on collinear columns is singular") {
  Eigen::MatrixXd X(5, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 5;
  CHECK_THROWS_AS(ridge_fit(X, y, 0.0), Error);
  CHECK_NOTHROW(ridge_fit(X, y, 1e-3));
}

TEST_CASE("ridge with constant y gives zero weights") {
  RngStream s(4, "const");
  const auto X = random_matrix(s, 20, 3);
  const auto m = ridge_fit(X, Eigen::VectorXd::Constant(20, 0.7), 1.0);
  CHECK(m.weights.norm() < 1e-12);
  CHECK(m.intercept == doctest::Approx(0.7));
}

TEST_CASE("svm separates a linearly separable set") {
  RngStream s(5, "svm-sep");
  const auto X = random_matrix(s, 200, 4);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) y[i] = X(i, 0) + X(i, 1) > 0 ? 1 : -1;
  RngStream fit(5, "svm-fit");
  const auto m = svm_fit(X, y, 10.0, 50, fit);
  int correct = 0;
  for (int i = 0; i < 200; ++i) correct += (m.predict(X.row(i).transpose()) > 0) == (y[i] > 0);
  CHECK(correct >= 194);
  const Eigen::VectorXd dir = m.weights.normalized();
  CHECK(dir[0] > 0.6);
  CHECK(dir[1] > 0.6);
}

TEST_CASE("svm rejects a single class") {
  RngStream s(6, "svm-one");
  const auto X = random_matrix(s, 10, 2);
  RngStream fit(6, "f");
  CHECK_THROWS_AS(svm_fit(X, Eigen::VectorXd::Ones(10), 1.0, 5, fit), Error);
}

TEST_CASE("logistic gradient matches finite differences") {
  RngStream s(7, "logit");
  const auto X = random_matrix(s, 40, 5);
  Eigen::VectorXd e(40), w(40);
  for (int i = 0; i < 40; ++i) {
    e[i] = s.uniform();
    w[i] = 0.5 + s.uniform();
  }
  for (double lambda : {0.5, 1.0, std::numeric_limits<double>::infinity()}) {
    Eigen::VectorXd theta(6);
    for (int j = 0; j < 6; ++j) theta[j] = 0.3 * s.normal();
    const auto r = grad_check([&](const Eigen::VectorXd& t) { return logistic_objective(X, e, w, lambda, t); },
                              [&](const Eigen::VectorXd& t) { return logistic_gradient(X, e, w, lambda, t); }, theta);
    CHECK(r.max_relative_error < 1e-5);
    CHECK(r.nondifferentiable.empty());
  }
}

TEST_CASE("logistic fit converges with a monotone objective trace") {
  RngStream s(8, "logit-fit");
  const auto X = random_matrix(s, 300, 3);
  Eigen::VectorXd e(300);
  for (int i = 0; i < 300; ++i) e[i] = s.uniform() < sigmoid(-0.5 + 1.2 * X(i, 0)) ? 1.0 : 0.0;
  const auto fit = logistic_fit(X, e, Eigen::VectorXd::Ones(300), 1.0);
  CHECK(fit.converged);
  CHECK(fit.final_gradient_norm <= 1e-8);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
    CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12);
  }
  CHECK(fit.coefficients[0] > 0.8);
  const Eigen::VectorXd theta = (Eigen::VectorXd(4) << fit.intercept, fit.coefficients).finished();
  CHECK(logistic_gradient(X, e, Eigen::VectorXd::Ones(300), 1.0, theta).norm() <= 1e-8);
}

TEST_CASE("logistic penalty limits") {
  RngStream s(9, "limits");
  const auto X = random_matrix(s, 50, 2);
  Eigen::VectorXd e(50);
  for (int i = 0; i < 50; ++i) e[i] = X(i, 0) > 0 ? 0.8 : 0.3;
  const auto pinned = logistic_fit(X, e, Eigen::VectorXd::Ones(50), 0.0);
  CHECK(pinned.coefficients.norm() == 0.0);
  CHECK(sigmoid(pinned.intercept) == doctest::Approx(e.mean()).epsilon(1e-9));
  const auto weak = logistic_fit(X, e, Eigen::VectorXd::Ones(50), 1e-3);
  const auto strong = logistic_fit(X, e, Eigen::VectorXd::Ones(50), 1e3);
  CHECK(weak.coefficients.norm() < strong.coefficients.norm());
}

TEST_CASE("integer weights equal duplicated rows") {
  RngStream s(10, "dup");
  const auto X = random_matrix(s, 30, 2);
  Eigen::VectorXd e(30), w(30);
  for (int i = 0; i < 30; ++i) {
    e[i] = s.uniform();
    w[i] = 1 + static_cast<double>(s.uniform_index(3));
  }
  Eigen::MatrixXd Xd(static_cast<Eigen::Index>(w.sum()), 2);
  Eigen::VectorXd ed(Xd.rows());
  Eigen::Index k = 0;
  for (int i = 0; i < 30; ++i) {
    for (int c = 0; c < w[i]; ++c, ++k) {
      Xd.row(k) = X.row(i);
      ed[k] = e[i];
    }
  }
  const auto a = logistic_fit(X, e, w, 2.0);
  const auto b = logistic_fit(Xd, ed, Eigen::VectorXd::Ones(Xd.rows()), 2.0);
  CHECK((a.coefficients - b.coefficients).norm() < 1e-8);
  CHECK(std::abs(a.intercept - b.intercept) < 1e-8);
}

TEST_CASE("grad_check flags kinks instead of failing") {
  const auto f = [](const Eigen::VectorXd& x) { return std::abs(x[0]) + x[1] * x[1]; };
  const auto g = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(2);
    out << (x[0] >= 0 ? 1.0 : -1.0), 2 * x[1];
    return out;
  };
  const auto r = grad_check(f, g, Eigen::Vector2d(0.0, 0.5));
  REQUIRE(r.nondifferentiable.size() == 1);
  CHECK(r.nondifferentiable[0] == 0);
  CHECK(r.max_relative_error < 1e-6);
  CHECK_FALSE(r.skipped);
}

TEST_CASE("grad_check catches a wrong gradient") {
  const auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  const auto g = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; };
  CHECK(grad_check(f, g, Eigen::Vector3d(1, 2, 3)).max_relative_error > 0.1);
}

TEST_CASE("sigmoid and logit are stable at the extremes") {
  CHECK(sigmoid(-800) >= 0.0);
  CHECK(sigmoid(800) == 1.0);
  CHECK(sigmoid(0) == 0.5);
  CHECK(logit(sigmoid(3.0)) == doctest::Approx(3.0));
}
