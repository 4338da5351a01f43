#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "latent_audit/core.hpp"
#include "latent_audit/numerics.hpp"

namespace latent_audit::geometry {

/// Attribute decision boundary {z : <normal, z> + offset = 0}, unit normal.
struct Hyperplane {
  std::string attribute;
  Eigen::VectorXd normal;
  double offset = 0.0;
};

enum class OrthoMode {
  none,           ///< v_j = n_j
  complement,     ///< v_j orthogonal to every other normal
  paper_literal,  ///< single-QR loop; only orthogonal to earlier normals
};

std::string to_string(OrthoMode mode);
OrthoMode ortho_mode_from_string(const std::string& s);

struct DirectionSet {
  OrthoMode mode = OrthoMode::complement;
  std::vector<std::string> attributes;
  std::vector<Eigen::VectorXd> raw_normals;
  std::vector<Eigen::VectorXd> directions;

  const Eigen::VectorXd& direction(const std::string& attribute) const;
  const Eigen::VectorXd& normal(const std::string& attribute) const;
};

/// normal = w/||w||, offset = (intercept - neutral)/||w||. For SVM models
/// pass neutral = 0 to get the decision boundary itself.
Hyperplane hyperplane_from_model(const numerics::LinearModel& model, const std::string& attribute, double neutral);

double signed_decision(const Eigen::VectorXd& z, const Hyperplane& h);
Eigen::VectorXd project_hyperplane(const Eigen::VectorXd& z, const Hyperplane& h);

struct ProjectionResult {
  Eigen::VectorXd point;
  int sweeps = 0;
  double residual = 0.0;
  /// Max |signed decision| before the first sweep and after each sweep.
  std::vector<double> residual_trace;
};

/// Cyclic projections onto the hyperplanes until every |signed decision| is
/// within tol. Throws NoConvergenceError after max_sweeps.
ProjectionResult project_intersection(const Eigen::VectorXd& z, const std::vector<Hyperplane>& hyperplanes,
                                      double tol = 1e-8, int max_sweeps = 50);

/// Traversal directions for a set of unit normals (at most D of them,
/// linearly independent). Every direction points toward increasing decision.
DirectionSet orthogonalize(const std::vector<Eigen::VectorXd>& normals, OrthoMode mode,
                           std::vector<std::string> attributes = {});
DirectionSet orthogonalize(const std::vector<Hyperplane>& hyperplanes, OrthoMode mode);

/// (c / <v, n>) v for unit v: moves a point's signed decision w.r.t. n by c.
Eigen::VectorXd grid_displacement(double c, const Eigen::VectorXd& v, const Eigen::VectorXd& n);

struct HyperplaneFitInfo {
  std::string method;  ///< "ridge" or "svm"
  double quality = 0.0;  ///< R^2 for ridge, training accuracy for svm
  double regularization = 0.0;
  double neutral = 0.5;
  int samples = 0;
};

struct HyperplaneSet {
  std::string space;
  int dim = 0;
  std::vector<Hyperplane> hyperplanes;
  std::vector<HyperplaneFitInfo> fit_info;

  const Hyperplane& at(const std::string& attribute) const;
};

nlohmann::json hyperplanes_to_json(const HyperplaneSet& set);
HyperplaneSet hyperplanes_from_json(const nlohmann::json& j);

}  // namespace latent_audit::geometry
