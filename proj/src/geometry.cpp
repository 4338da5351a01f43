#include "latent_audit/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "latent_audit/dataset_io.hpp"

namespace latent_audit::geometry {

std::string to_string(OrthoMode mode) {
  switch (mode) {
    case OrthoMode::none: return "none";
    case OrthoMode::complement: return "complement";
    case OrthoMode::paper_literal: return "paper_literal";
  }
  return "complement";
}

OrthoMode ortho_mode_from_string(const std::string& s) {
  if (s == "none") return OrthoMode::none;
  if (s == "complement") return OrthoMode::complement;
  if (s == "paper_literal") return OrthoMode::paper_literal;
  throw Error(ErrorCode::Parse, "unknown orthogonalization mode '" + s + "'");
}

namespace {

std::size_t attribute_index(const std::vector<std::string>& names, const std::string& attribute) {
  auto it = std::find(names.begin(), names.end(), attribute);
  if (it == names.end()) throw Error(ErrorCode::MissingAttribute, "no direction for attribute '" + attribute + "'");
  return static_cast<std::size_t>(it - names.begin());
}

void check_dims(const Eigen::VectorXd& z, const Hyperplane& h) {
  if (z.size() != h.normal.size()) {
    throw Error(ErrorCode::DimensionMismatch, "point has dimension " + std::to_string(z.size()) + ", hyperplane '" +
                                                  h.attribute + "' has " + std::to_string(h.normal.size()));
  }
}

}  // namespace

const Eigen::VectorXd& DirectionSet::direction(const std::string& attribute) const {
  return directions[attribute_index(attributes, attribute)];
}

const Eigen::VectorXd& DirectionSet::normal(const std::string& attribute) const {
  return raw_normals[attribute_index(attributes, attribute)];
}

Hyperplane hyperplane_from_model(const numerics::LinearModel& model, const std::string& attribute, double neutral) {
  const double norm = model.weights.norm();
  if (!(norm >= 1e-12)) throw Error(ErrorCode::ZeroNormal, "model for '" + attribute + "' has zero weights");
  return Hyperplane{attribute, model.weights / norm, (model.intercept - neutral) / norm};
}

double signed_decision(const Eigen::VectorXd& z, const Hyperplane& h) {
  check_dims(z, h);
  return h.normal.dot(z) + h.offset;
}

Eigen::VectorXd project_hyperplane(const Eigen::VectorXd& z, const Hyperplane& h) {
  check_dims(z, h);
  return z - (h.normal.dot(z) + h.offset) * h.normal;
}

ProjectionResult project_intersection(const Eigen::VectorXd& z, const std::vector<Hyperplane>& hyperplanes, double tol,
                                      int max_sweeps) {
  if (hyperplanes.empty()) throw Error(ErrorCode::Validation, "project_intersection needs at least one hyperplane");
  for (const auto& h : hyperplanes) check_dims(z, h);

  auto residual = [&](const Eigen::VectorXd& p) {
    double r = 0.0;
    for (const auto& h : hyperplanes) r = std::max(r, std::abs(h.normal.dot(p) + h.offset));
    return r;
  };

  ProjectionResult out;
  out.point = z;
  out.residual = residual(out.point);
  out.residual_trace.push_back(out.residual);
  Eigen::VectorXd best = out.point;
  double best_residual = out.residual;
  while (out.residual > tol) {
    if (out.sweeps >= max_sweeps) {
      throw NoConvergenceError("projection onto " + std::to_string(hyperplanes.size()) +
                                   " hyperplanes did not converge in " + std::to_string(max_sweeps) + " sweeps",
                               best, best_residual, out.sweeps);
    }
    for (const auto& h : hyperplanes) out.point -= (h.normal.dot(out.point) + h.offset) * h.normal;
    ++out.sweeps;
    out.residual = residual(out.point);
    out.residual_trace.push_back(out.residual);
    if (out.residual < best_residual) {
      best_residual = out.residual;
      best = out.point;
    }
  }
  return out;
}

namespace {

constexpr double kRankTol = 1e-10;

Eigen::VectorXd complement_direction(const std::vector<Eigen::VectorXd>& normals, std::size_t j) {
  const Eigen::Index d = normals[j].size();
  const auto others = static_cast<Eigen::Index>(normals.size() - 1);
  Eigen::VectorXd r = normals[j];
  if (others > 0) {
    Eigen::MatrixXd M(d, others);
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < normals.size(); ++k) {
      if (k != j) M.col(col++) = normals[k];
    }
    // Orthonormal basis of span{n_k : k != j}; two passes of projection keep
    // the residual orthogonal to working precision.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, others);
    r -= Q * (Q.transpose() * r);
    r -= Q * (Q.transpose() * r);
  }
  const double norm = r.norm();
  if (norm < kRankTol) {
    throw Error(ErrorCode::RankDeficient,
                "normal " + std::to_string(j) + " lies in the span of the other normals");
  }
  return r / norm;
}

}  // namespace

DirectionSet orthogonalize(const std::vector<Eigen::VectorXd>& normals, OrthoMode mode,
                           std::vector<std::string> attributes) {
  DirectionSet out;
  out.mode = mode;
  out.raw_normals = normals;
  if (attributes.empty()) {
    for (std::size_t j = 0; j < normals.size(); ++j) attributes.push_back("a" + std::to_string(j));
  }
  if (attributes.size() != normals.size()) throw Error(ErrorCode::Validation, "attribute names do not match normals");
  out.attributes = std::move(attributes);
  if (normals.empty()) return out;

  const Eigen::Index d = normals.front().size();
  for (const auto& n : normals) {
    if (n.size() != d) throw Error(ErrorCode::DimensionMismatch, "normals differ in dimension");
  }
  if (static_cast<Eigen::Index>(normals.size()) > d) {
    throw Error(ErrorCode::RankDeficient, "more normals than latent dimensions");
  }

  switch (mode) {
    case OrthoMode::none:
      for (const auto& n : normals) out.directions.push_back(n.normalized());
      break;
    case OrthoMode::complement:
      for (std::size_t j = 0; j < normals.size(); ++j) out.directions.push_back(complement_direction(normals, j));
      break;
    case OrthoMode::paper_literal: {
      const auto na = static_cast<Eigen::Index>(normals.size());
      Eigen::MatrixXd N(d, na);
      for (Eigen::Index j = 0; j < na; ++j) N.col(j) = normals[static_cast<std::size_t>(j)];
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(N);
      const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, na);
      for (Eigen::Index i = 0; i < na; ++i) {
        Eigen::VectorXd v = N.col(i);
        for (Eigen::Index j = 0; j < na; ++j) {
          if (i == j) continue;
          const Eigen::VectorXd q = Q.col(j);
          v -= q * (q.dot(v) / q.dot(q));
        }
        const double norm = v.norm();
        if (norm < kRankTol) throw Error(ErrorCode::RankDeficient, "normal " + std::to_string(i) + " collapsed");
        v /= norm;
        if (v.dot(N.col(i)) < 0.0) v = -v;
        out.directions.push_back(std::move(v));
      }
      break;
    }
  }
  return out;
}

DirectionSet orthogonalize(const std::vector<Hyperplane>& hyperplanes, OrthoMode mode) {
  std::vector<Eigen::VectorXd> normals;
  std::vector<std::string> names;
  for (const auto& h : hyperplanes) {
    normals.push_back(h.normal);
    names.push_back(h.attribute);
  }
  return orthogonalize(normals, mode, std::move(names));
}

Eigen::VectorXd grid_displacement(double c, const Eigen::VectorXd& v, const Eigen::VectorXd& n) {
  if (v.size() != n.size()) throw Error(ErrorCode::DimensionMismatch, "direction and normal differ in dimension");
  const double vn = v.normalized().dot(n);
  if (!(vn >= 1e-8)) throw Error(ErrorCode::DegenerateDirection, "direction is (nearly) parallel to the hyperplane");
  return (c / vn) * v.normalized();
}

const Hyperplane& HyperplaneSet::at(const std::string& attribute) const {
  for (const auto& h : hyperplanes) {
    if (h.attribute == attribute) return h;
  }
  throw Error(ErrorCode::MissingAttribute, "no hyperplane for attribute '" + attribute + "'");
}

nlohmann::json hyperplanes_to_json(const HyperplaneSet& set) {
  nlohmann::json planes = nlohmann::json::array();
  for (std::size_t i = 0; i < set.hyperplanes.size(); ++i) {
    const auto& h = set.hyperplanes[i];
    nlohmann::json normal = nlohmann::json::array();
    for (Eigen::Index k = 0; k < h.normal.size(); ++k) normal.push_back(format_real(h.normal[k]));
    nlohmann::json o{{"attribute", h.attribute}, {"normal", std::move(normal)}, {"offset", format_real(h.offset)}};
    if (i < set.fit_info.size()) {
      const auto& f = set.fit_info[i];
      o["fit"] = {{"method", f.method},
                  {"quality", f.quality},
                  {"regularization", f.regularization},
                  {"neutral", f.neutral},
                  {"samples", f.samples}};
    }
    planes.push_back(std::move(o));
  }
  return {{"space", set.space}, {"dim", set.dim}, {"hyperplanes", std::move(planes)}};
}

HyperplaneSet hyperplanes_from_json(const nlohmann::json& j) {
  HyperplaneSet set;
  try {
    set.space = j.value("space", std::string());
    set.dim = j.at("dim").get<int>();
    for (const auto& o : j.at("hyperplanes")) {
      Hyperplane h;
      h.attribute = o.at("attribute").get<std::string>();
      const auto& normal = o.at("normal");
      h.normal.resize(static_cast<Eigen::Index>(normal.size()));
      for (std::size_t k = 0; k < normal.size(); ++k) {
        h.normal[static_cast<Eigen::Index>(k)] = parse_real(normal[k].get<std::string>());
      }
      h.offset = parse_real(o.at("offset").get<std::string>());
      if (h.normal.size() != set.dim) throw Error(ErrorCode::DimensionMismatch, h.attribute + ": normal length != dim");
      HyperplaneFitInfo info;
      if (o.contains("fit")) {
        const auto& f = o.at("fit");
        info.method = f.value("method", std::string());
        info.quality = f.value("quality", 0.0);
        info.regularization = f.value("regularization", 0.0);
        info.neutral = f.value("neutral", 0.5);
        info.samples = f.value("samples", 0);
      }
      set.hyperplanes.push_back(std::move(h));
      set.fit_info.push_back(info);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("hyperplane file: ") + e.what());
  }
  return set;
}

}  // namespace latent_audit::geometry
