#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "latent_audit/core.hpp"
#include "latent_audit/geometry.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit::transect {

struct GeneratorInfo {
  std::string space;
  int dim = 0;
  /// Whether generate() may be called from several threads at once.
  bool concurrent = false;
};

struct GeneratedImage {
  std::string image_id;
  std::string path;  ///< optional server-side location
};

/// Black-box image generator G(z).
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GeneratorInfo info() const = 0;
  virtual GeneratedImage generate(const LatentPoint& z) = 0;
};

/// Black-box attribute classifier C(image) -> score in [0,1].
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<std::string> classifier_names() const = 0;
  virtual double classify(const std::string& image_id, const std::string& classifier) = 0;
  virtual bool concurrent() const { return false; }
};

/// Evenly spaced decision values with inclusive endpoints; L == 1 gives {min}.
std::vector<double> interpolate_decisions(double min, double max, int length);

struct TransectAxis {
  std::string attribute;
  std::vector<double> decisions;  ///< strictly increasing, length L_k
};

struct ControlledAttribute {
  std::string attribute;
  double decision = 0.0;
};

struct TransectSpec {
  std::vector<TransectAxis> axes;
  std::vector<ControlledAttribute> controlled;
  geometry::OrthoMode ortho_mode = geometry::OrthoMode::complement;

  std::size_t cells() const;
  std::vector<int> shape() const;
};

/// Spec rule violations; empty means usable.
std::vector<std::string> check_spec(const TransectSpec& spec);

nlohmann::json spec_to_json(const TransectSpec& spec);
TransectSpec spec_from_json(const nlohmann::json& j);

struct TransectCell {
  LatentPoint latent;
  std::string image_id;
  std::string path;
  std::vector<int> grid_index;
  std::vector<double> intended;
};

/// L_1 x ... x L_K grid, stored row-major (last axis fastest).
struct Transect {
  std::int64_t id = 0;
  LatentPoint base_point;
  std::vector<std::string> axes;
  std::vector<int> shape;
  std::vector<TransectCell> cells;
  int projection_sweeps = 0;
};

/// Hyperplanes the base point is projected onto: every axis plus every
/// controlled attribute (shifted to its pinned decision).
std::vector<geometry::Hyperplane> constraint_hyperplanes(const TransectSpec& spec,
                                                         const geometry::HyperplaneSet& hyperplanes);

/// One transect: z ~ N(0, I), projected onto the constraint intersection,
/// then G(z0 + sum_k grid_displacement(c_k[l_k], v_k, n_k)) for each cell.
Transect generate_transect(Generator& generator, const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                           const geometry::DirectionSet& directions, RngStream& stream, std::int64_t transect_id);

/// Latent grid only, without calling a generator.
Transect build_transect_latents(const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                                const geometry::DirectionSet& directions, const Eigen::VectorXd& sample,
                                std::int64_t transect_id, const std::string& space);

struct BatchFailure {
  std::int64_t transect_id = 0;
  std::string message;
};

struct BatchOptions {
  std::uint64_t master_seed = 0;
  std::int64_t first_id = 0;
  /// Transect ids already present (resume); they are not regenerated.
  std::set<std::int64_t> skip;
};

struct BatchResult {
  std::vector<DatasetRecord> records;
  std::vector<BatchFailure> failures;
  std::size_t generated_transects = 0;
};

std::vector<DatasetRecord> transect_records(const Transect& t);

/// Stream label used for transect `id`; the batch result does not depend on
/// thread count because each transect draws from its own stream.
std::string transect_stream_label(std::int64_t id);

/// OpenMP over transects when the generator is concurrent, serial otherwise.
BatchResult generate_batch(Generator& generator, const TransectSpec& spec, const geometry::HyperplaneSet& hyperplanes,
                           const geometry::DirectionSet& directions, std::int64_t count, const BatchOptions& options);

/// Single-threaded reference for generate_batch.
BatchResult generate_batch_serial(Generator& generator, const TransectSpec& spec,
                                  const geometry::HyperplaneSet& hyperplanes,
                                  const geometry::DirectionSet& directions, std::int64_t count,
                                  const BatchOptions& options);

}  // namespace latent_audit::transect
