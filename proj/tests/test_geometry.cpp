#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latent_audit/geometry.hpp"

using namespace latent_audit;
using namespace latent_audit::geometry;

namespace {

Eigen::VectorXd random_unit(RngStream& s, int d) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = s.normal();
  return v.normalized();
}

std::vector<Hyperplane> random_planes(RngStream& s, int d, int k) {
  std::vector<Hyperplane> out;
  for (int j = 0; j < k; ++j) out.push_back({"a" + std::to_string(j), random_unit(s, d), s.normal()});
  return out;
}

// Closed-form orthogonal projection onto {x : N x + b = 0}.
Eigen::VectorXd affine_projection(const Eigen::VectorXd& z, const std::vector<Hyperplane>& planes) {
  Eigen::MatrixXd N(static_cast<Eigen::Index>(planes.size()), z.size());
  Eigen::VectorXd b(N.rows());
  for (std::size_t j = 0; j < planes.size(); ++j) {
    N.row(static_cast<Eigen::Index>(j)) = planes[j].normal.transpose();
    b[static_cast<Eigen::Index>(j)] = planes[j].offset;
  }
  const Eigen::VectorXd lambda = (N * N.transpose()).ldlt().solve(N * z + b);
  return z - N.transpose() * lambda;
}

}  // namespace

TEST_CASE("single hyperplane projection is exact") {
  RngStream s(1, "one");
  const auto planes = random_planes(s, 16, 1);
  Eigen::VectorXd z(16);
  for (int i = 0; i < 16; ++i) z[i] = s.normal();
  const auto p = project_hyperplane(z, planes[0]);
  CHECK(std::abs(signed_decision(p, planes[0])) < 1e-12);
  CHECK((p - affine_projection(z, planes)).norm() < 1e-12);
}

TEST_CASE("cyclic projection reaches the least-norm point") {
  RngStream s(2, "pocs");
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 5;
    const auto planes = random_planes(s, 64, k);
    Eigen::VectorXd z(64);
    for (int i = 0; i < 64; ++i) z[i] = s.normal();
    const auto r = project_intersection(z, planes);
    CHECK(r.residual <= 1e-8);
    CHECK(r.sweeps <= 50);
    CHECK((r.point - affine_projection(z, planes)).norm() < 1e-6);
  }
}

TEST_CASE("a point already on the planes takes zero sweeps") {
  RngStream s(3, "zero");
  const auto planes = random_planes(s, 8, 3);
  Eigen::VectorXd z(8);
  for (int i = 0; i < 8; ++i) z[i] = s.normal();
  const auto on = affine_projection(z, planes);
  const auto r = project_intersection(on, planes);
  CHECK(r.sweeps == 0);
  CHECK(r.point == on);
}

TEST_CASE("nearly parallel planes exhaust the sweep budget with the best iterate") {
  Eigen::VectorXd n1 = Eigen::VectorXd::Zero(4);
  n1[0] = 1;
  Eigen::VectorXd n2 = n1;
  n2[1] = 1e-4;
  n2.normalize();
  const std::vector<Hyperplane> planes{{"a", n1, 0.0}, {"b", n2, -1.0}};
  try {
    project_intersection(Eigen::VectorXd::Zero(4), planes, 1e-8, 10);
    FAIL("expected NoConvergenceError");
  } catch (const NoConvergenceError& e) {
    CHECK(e.iterations() == 10);
    CHECK(e.best().size() == 4);
    CHECK(std::isfinite(e.residual()));
  }
}

TEST_CASE("dimension mismatch is reported") {
  RngStream s(4, "dim");
  const auto planes = random_planes(s, 5, 1);
  CHECK_THROWS_AS(project_intersection(Eigen::VectorXd::Zero(4), planes), Error);
  CHECK_THROWS_AS(signed_decision(Eigen::VectorXd::Zero(6), planes[0]), Error);
}

TEST_CASE("complement directions are orthogonal to every other normal") {
  RngStream s(5, "complement");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::VectorXd> normals;
    for (int j = 0; j < 7; ++j) normals.push_back(random_unit(s, 32));
    const auto dirs = orthogonalize(normals, OrthoMode::complement);
    double worst = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(dirs.directions[j].norm() == doctest::Approx(1.0));
      CHECK(dirs.directions[j].dot(normals[j]) > 0.0);
      for (std::size_t k = 0; k < 7; ++k) {
        if (k != j) worst = std::max(worst, std::abs(dirs.directions[j].dot(normals[k])));
      }
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("paper_literal subtraction leaves cross terms for three or more normals") {
  RngStream s(6, "literal");
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Eigen::VectorXd> normals;
    for (int j = 0; j < 3; ++j) normals.push_back(random_unit(s, 8));
    const auto dirs = orthogonalize(normals, OrthoMode::paper_literal);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (k != j) worst = std::max(worst, std::abs(dirs.directions[j].dot(normals[k])));
      }
    }
  }
  CHECK(worst > 1e-3);
}

TEST_CASE("none mode returns the normals") {
  RngStream s(7, "none");
  std::vector<Eigen::VectorXd> normals{random_unit(s, 5), random_unit(s, 5)};
  const auto dirs = orthogonalize(normals, OrthoMode::none, {"x", "y"});
  CHECK((dirs.direction("y") - normals[1]).norm() < 1e-15);
  CHECK_THROWS_AS(dirs.direction("z"), Error);
}

TEST_CASE("linearly dependent normals are rank deficient") {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(4), b = a, c;
  a[0] = 1;
  b[1] = 1;
  c = (a + b).normalized();
  CHECK_THROWS_AS(orthogonalize({a, b, c}, OrthoMode::complement), Error);
  CHECK_THROWS_AS(orthogonalize({a, a}, OrthoMode::complement), Error);
}

TEST_CASE("grid displacement moves the decision by exactly c") {
  RngStream s(8, "grid");
  const Eigen::VectorXd n = random_unit(s, 10);
  Eigen::VectorXd v = n + 0.5 * random_unit(s, 10);
  const Hyperplane h{"a", n, 0.3};
  Eigen::VectorXd z(10);
  for (int i = 0; i < 10; ++i) z[i] = s.normal();
  for (double c : {-1.5, 0.0, 1.7}) {
    const auto dz = grid_displacement(c, v, n);
    CHECK(signed_decision(z + dz, h) - signed_decision(z, h) == doctest::Approx(c).epsilon(1e-12));
  }
  Eigen::VectorXd perp = random_unit(s, 10);
  perp -= perp.dot(n) * n;
  CHECK_THROWS_AS(grid_displacement(1.0, perp, n), Error);
}

TEST_CASE("hyperplane_from_model normalizes and shifts by the neutral score") {
  numerics::LinearModel m;
  m.weights = Eigen::Vector2d(3, 4);
  m.intercept = 1.5;
  const auto h = hyperplane_from_model(m, "x", 0.5);
  CHECK(h.normal.norm() == doctest::Approx(1.0));
  CHECK(h.offset == doctest::Approx(0.2));
  const Eigen::Vector2d z(0.1, -0.7);
  CHECK(signed_decision(z, h) == doctest::Approx((m.predict(z) - 0.5) / 5.0));
  m.weights.setZero();
  CHECK_THROWS_AS(hyperplane_from_model(m, "x", 0.5), Error);
}

TEST_CASE("hyperplane sets round-trip through JSON exactly") {
  RngStream s(9, "json");
  HyperplaneSet set;
  set.space = "synth";
  set.dim = 6;
  set.hyperplanes = random_planes(s, 6, 2);
  set.fit_info = {{"ridge", 0.9, 1.0, 0.5, 100}, {"svm", 0.97, 1.0, 0.5, 100}};
  const auto back = hyperplanes_from_json(hyperplanes_to_json(set));
  CHECK(back.hyperplanes[1].normal == set.hyperplanes[1].normal);
  CHECK(back.hyperplanes[0].offset == set.hyperplanes[0].offset);
  CHECK(back.fit_info[1].method == "svm");
  CHECK(hyperplanes_to_json(back).dump() == hyperplanes_to_json(set).dump());
}
