#include "latent_audit/transect.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <omp.h>

namespace latent_audit::transect {

std::vector<double> interpolate_decisions(double min, double max, int length) {
  if (length < 1) throw Error(ErrorCode::BadRange, "transect length must be >= 1");
  if (!std::isfinite(min) || !std::isfinite(max)) throw Error(ErrorCode::BadRange, "decision range must be finite");
  if (length == 1) return {min};
  if (!(min < max)) throw Error(ErrorCode::BadRange, "decision range needs min < max");
  std::vector<double> out(static_cast<std::size_t>(length));
  const double span = max - min;
  for (int i = 0; i < length; ++i) out[static_cast<std::size_t>(i)] = min + span * i / (length - 1);
  out.back() = max;
  return out;
}

std::size_t TransectSpec::cells() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.decisions.size();
  return n;
}

std::vector<int> TransectSpec::shape() const {
  std::vector<int> s;
  for (const auto& a : axes) s.push_back(static_cast<int>(a.decisions.size()));
  return s;
}

std::vector<std::string> check_spec(const TransectSpec& spec) {
  std::vector<std::string> problems;
  if (spec.axes.empty()) problems.push_back("spec has no axes");
  std::set<std::string> names;
  for (const auto& a : spec.axes) {
    if (a.decisions.empty()) problems.push_back(a.attribute + ": axis needs at least one decision value");
    for (std::size_t i = 1; i < a.decisions.size(); ++i) {
      if (!(a.decisions[i - 1] < a.decisions[i])) {
        problems.push_back(a.attribute + ": decisions must be strictly increasing");
        break;
      }
    }
    if (!names.insert(a.attribute).second) problems.push_back(a.attribute + ": repeated axis attribute");
  }
  for (const auto& c : spec.controlled) {
    if (!names.insert(c.attribute).second) {
      problems.push_back(c.attribute + ": controlled attribute repeats an axis or another controlled entry");
    }
  }
  return problems;
}

nlohmann::json spec_to_json(const TransectSpec& spec) {
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : spec.axes) {
    axes.push_back({{"attribute", a.attribute}, {"length", a.decisions.size()}, {"decisions", a.decisions}});
  }
  nlohmann::json controlled = nlohmann::json::array();
  for (const auto& c : spec.controlled) controlled.push_back({{"attribute", c.attribute}, {"decision", c.decision}});
  return {{"axes", std::move(axes)}, {"controlled", std::move(controlled)},
          {"ortho_mode", geometry::to_string(spec.ortho_mode)}};
}

TransectSpec spec_from_json(const nlohmann::json& j) {
  TransectSpec spec;
  try {
    for (const auto& a : j.at("axes")) {
      TransectAxis axis;
      axis.attribute = a.at("attribute").get<std::string>();
      if (a.contains("decisions")) {
        axis.decisions = a.at("decisions").get<std::vector<double>>();
        if (a.contains("length") && a.at("length").get<std::size_t>() != axis.decisions.size()) {
          throw Error(ErrorCode::Parse, axis.attribute + ": length does not match decisions");
        }
      } else {
        axis.decisions = interpolate_decisions(a.at("min").get<double>(), a.at("max").get<double>(),
                                               a.at("length").get<int>());
      }
      spec.axes.push_back(std::move(axis));
    }
    if (j.contains("controlled")) {
      for (const auto& c : j.at("controlled")) {
        if (c.is_string()) {
          spec.controlled.push_back({c.get<std::string>(), 0.0});
        } else {
          spec.controlled.push_back({c.at("attribute").get<std::string>(), c.value("decision", 0.0)});
        }
      }
    }
    spec.ortho_mode = geometry::ortho_mode_from_string(j.value("ortho_mode", std::string("complement")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("transect spec: ") + e.what());
  }
  const auto problems = check_spec(spec);
  if (!problems.empty()) throw Error(ErrorCode::Validation, "transect spec: " + problems.front());
  return spec;
}

std::vector<geometry::Hyperplane> constraint_hyperplanes(const TransectSpec& spec,
                                                         const geometry::HyperplaneSet& hyperplanes) {
  std::vector<geometry::Hyperplane> out;
  for (const auto& a : spec.axes) out.push_back(hyperplanes.at(a.attribute));
  for (const auto& c : spec.controlled) {
    geometry::Hyperplane h = hyperplanes.at(c.attribute);
    h.offset -= c.decision;
    out.push_back(std::move(h));
  }
  return out;
}

namespace {

std::string format_index(const std::vector<int>& idx) {
  std::string s = "(";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(idx[i]);
  }
  return s + ")";
}

}  // namespace

Transect build_transect_latents(const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                                const geometry::DirectionSet& directions, const Eigen::VectorXd& sample,
                                std::int64_t transect_id, const std::string& space) {
  const auto problems = check_spec(spec);
  if (!problems.empty()) throw Error(ErrorCode::Validation, "transect spec: " + problems.front());

  const auto constraints = constraint_hyperplanes(spec, hyperplanes);
  const auto projected = geometry::project_intersection(sample, constraints);

  Transect t;
  t.id = transect_id;
  t.base_point = LatentPoint{space, projected.point};
  t.projection_sweeps = projected.sweeps;
  t.shape = spec.shape();

  const std::size_t k_axes = spec.axes.size();
  // Per-axis displacement table: disp[k][l] moves decision k by c_k[l].
  std::vector<std::vector<Eigen::VectorXd>> disp(k_axes);
  for (std::size_t k = 0; k < k_axes; ++k) {
    const auto& axis = spec.axes[k];
    t.axes.push_back(axis.attribute);
    const Eigen::VectorXd& v = directions.direction(axis.attribute);
    const Eigen::VectorXd& n = hyperplanes.at(axis.attribute).normal;
    for (double c : axis.decisions) disp[k].push_back(geometry::grid_displacement(c, v, n));
  }

  const std::size_t total = spec.cells();
  t.cells.reserve(total);
  std::vector<int> idx(k_axes, 0);
  for (std::size_t cell = 0; cell < total; ++cell) {
    TransectCell c;
    c.grid_index = idx;
    Eigen::VectorXd z = t.base_point.values;
    for (std::size_t k = 0; k < k_axes; ++k) {
      const auto l = static_cast<std::size_t>(idx[k]);
      z += disp[k][l];
      c.intended.push_back(spec.axes[k].decisions[l]);
    }
    c.latent = LatentPoint{space, std::move(z)};
    t.cells.push_back(std::move(c));
    // Odometer increment, last axis fastest.
    for (std::size_t k = k_axes; k-- > 0;) {
      if (++idx[k] < t.shape[k]) break;
      idx[k] = 0;
    }
  }
  return t;
}

Transect generate_transect(Generator& generator, const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                           const geometry::DirectionSet& directions, RngStream& stream, std::int64_t transect_id) {
  const GeneratorInfo gi = generator.info();
  if (gi.dim != hyperplanes.dim) {
    throw Error(ErrorCode::DimensionMismatch, "generator dimension " + std::to_string(gi.dim) +
                                                  " does not match hyperplanes " + std::to_string(hyperplanes.dim));
  }
  Eigen::VectorXd sample(gi.dim);
  for (Eigen::Index i = 0; i < sample.size(); ++i) sample[i] = stream.normal();

  Transect t = build_transect_latents(spec, hyperplanes, directions, sample, transect_id, gi.space);
  for (auto& cell : t.cells) {
    try {
      const GeneratedImage img = generator.generate(cell.latent);
      cell.image_id = img.image_id;
      cell.path = img.path;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::GeneratorFailure, "transect " + std::to_string(transect_id) + " cell " +
                                                   format_index(cell.grid_index) + ": " + e.what());
    }
  }
  return t;
}

std::string transect_stream_label(std::int64_t id) { return "transect/" + std::to_string(id); }

std::vector<DatasetRecord> transect_records(const Transect& t) {
  std::vector<DatasetRecord> out;
  out.reserve(t.cells.size());
  for (const auto& c : t.cells) {
    DatasetRecord r;
    r.image_id = c.image_id;
    r.latent = c.latent;
    r.transect = TransectCoords{t.id, t.axes, c.grid_index, c.intended};
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct Slot {
  std::optional<Transect> transect;
  std::string error;
};

Slot run_one(Generator& generator, const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
             const geometry::DirectionSet& directions, std::uint64_t seed, std::int64_t id) {
  Slot s;
  try {
    RngStream stream = derive_stream(seed, transect_stream_label(id));
    s.transect = generate_transect(generator, spec, hyperplanes, directions, stream, id);
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

BatchResult assemble(std::vector<Slot>& slots, const std::vector<std::int64_t>& ids) {
  BatchResult out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].transect) {
      auto recs = transect_records(*slots[i].transect);
      std::move(recs.begin(), recs.end(), std::back_inserter(out.records));
      ++out.generated_transects;
    } else {
      out.failures.push_back({ids[i], slots[i].error});
    }
  }
  return out;
}

std::vector<std::int64_t> pending_ids(std::int64_t count, const BatchOptions& options) {
  if (count < 0) throw Error(ErrorCode::Validation, "transect count must be >= 0");
  std::vector<std::int64_t> ids;
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t id = options.first_id + i;
    if (!options.skip.contains(id)) ids.push_back(id);
  }
  return ids;
}

}  // namespace

BatchResult generate_batch_serial(Generator& generator, const TransectSpec& spec,
                                  const geometry::HyperplaneSet& hyperplanes,
                                  const geometry::DirectionSet& directions, std::int64_t count,
                                  const BatchOptions& options) {
  const auto ids = pending_ids(count, options);
  std::vector<Slot> slots(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    slots[i] = run_one(generator, spec, hyperplanes, directions, options.master_seed, ids[i]);
  }
  return assemble(slots, ids);
}

BatchResult generate_batch(Generator& generator, const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                           const geometry::DirectionSet& directions, std::int64_t count, const BatchOptions& options) {
  if (!generator.info().concurrent) {
    return generate_batch_serial(generator, spec, hyperplanes, directions, count, options);
  }
  const auto ids = pending_ids(count, options);
  std::vector<Slot> slots(ids.size());
  const auto n = static_cast<std::int64_t>(ids.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    slots[u] = run_one(generator, spec, hyperplanes, directions, options.master_seed, ids[u]);
  }
  return assemble(slots, ids);
}

}  // namespace latent_audit::transect
