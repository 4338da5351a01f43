#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latent_audit/analysis.hpp"
#include "latent_audit/geometry.hpp"
#include "latent_audit/report.hpp"
#include "latent_audit/transect.hpp"
#include "latent_audit/worldsim.hpp"

namespace latent_audit::pipeline {

namespace fs = std::filesystem;

/// 0 ok, 2 validation, 3 solver, 4 connectivity, 5 scenario.
int exit_code_for(ErrorCode code);
/// {"error": code, "message": text, "exit_code": n}
nlohmann::json error_json(const Error& e);

/// Sets the OpenMP thread count when threads > 0.
void set_threads(int threads);

struct FitParams {
  double ridge_lambda = 1.0;
  double svm_c = 1.0;
  int svm_epochs = 20;
  /// Overrides every attribute's neutral score when set.
  std::optional<double> neutral;
  std::uint64_t seed = 0;
};

/// Ridge on mean scores for continuous attributes, SVM on mean > neutral for
/// binary ones. Fit quality is R^2 (ridge) or training accuracy (SVM).
geometry::HyperplaneSet fit_hyperplanes(const AuditDataset& dataset, const AttributeSchema& schema,
                                        const FitParams& params);

/// Axes from the schema's step ranges at `length` points each; every other
/// schema attribute is controlled at decision 0.
transect::TransectSpec default_transect_spec(const AttributeSchema& schema, const std::vector<std::string>& axes,
                                             int length = 2);

/// skin, hair_length, gender
std::vector<std::string> default_axes();

/// World model for a seed; the same call always yields the same loadings.
worldsim::WorldModel build_world(const worldsim::WorldConfig& config, std::uint64_t seed);

struct FitCommand {
  fs::path dataset;
  std::optional<fs::path> schema;  ///< defaults to the dataset header schema
  fs::path out;
  FitParams params;
};
geometry::HyperplaneSet cmd_fit(const FitCommand& cmd);

struct TransectCommand {
  fs::path hyperplanes;
  std::optional<fs::path> spec;  ///< default: 2x2x2 over default_axes()
  std::int64_t count = 1000;
  std::uint64_t seed = 0;
  std::optional<std::string> endpoint;
  std::optional<fs::path> world;  ///< world config; annotates with the simulated oracle
  std::uint64_t world_seed = 0;
  std::optional<fs::path> schema;
  fs::path out;
  int timeout_ms = 5000;
  /// Transects per append; partial output survives a failure.
  std::int64_t chunk = 50;
};

struct TransectSummary {
  std::size_t existing_transects = 0;
  std::size_t generated_transects = 0;
  std::size_t records_written = 0;
};
TransectSummary cmd_transect(const TransectCommand& cmd);

struct AuditCommand {
  fs::path dataset;
  std::optional<fs::path> rules;  ///< default prune rules when absent
  AuditConfig config;
  fs::path out;  ///< report JSON; .txt and .csv siblings are written next to it
};
BiasReport cmd_audit(const AuditCommand& cmd);

enum class Scenario { matched, observational };

struct SimulateCommand {
  std::optional<fs::path> world;  ///< default_world_config() when absent
  Scenario scenario = Scenario::matched;
  std::vector<worldsim::CorrelationTarget> targets;
  /// Transects (matched) or images (observational).
  std::int64_t n = 1000;
  std::size_t fit_samples = 5000;
  std::uint64_t seed = 0;
  std::optional<fs::path> spec;
  fs::path out;
  /// Matched only: optional copies of the fit sample and the hyperplanes.
  std::optional<fs::path> out_fit;
  std::optional<fs::path> out_hyperplanes;
  FitParams fit;
};

struct SimulateResult {
  AuditDataset dataset;
  std::optional<AuditDataset> fit_dataset;
  std::optional<geometry::HyperplaneSet> hyperplanes;
};

/// In-memory form of cmd_simulate (no files written).
SimulateResult simulate(const worldsim::WorldConfig& config, const SimulateCommand& cmd);
SimulateResult cmd_simulate(const SimulateCommand& cmd);

/// "a:b=0.8" -> {a, b, 0.8}
worldsim::CorrelationTarget parse_correlation_target(const std::string& text);

}  // namespace latent_audit::pipeline
