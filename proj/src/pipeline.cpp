#include "latent_audit/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <omp.h>

#include "latent_audit/bridge.hpp"
#include "latent_audit/dataset_io.hpp"
#include "latent_audit/numerics.hpp"

namespace latent_audit::pipeline {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::DegenerateLabels:
    case ErrorCode::NoConvergence:
    case ErrorCode::ZeroNormal:
    case ErrorCode::RankDeficient:
    case ErrorCode::DegenerateDirection:
    case ErrorCode::BootstrapFailure:
      return 3;
    case ErrorCode::Timeout:
    case ErrorCode::Transport:
    case ErrorCode::VersionMismatch:
    case ErrorCode::ServerError:
    case ErrorCode::UnknownImage:
    case ErrorCode::UnknownClassifier:
    case ErrorCode::GeneratorFailure:
      return 4;
    case ErrorCode::UnachievableCorrelation:
      return 5;
    default:
      return 2;
  }
}

nlohmann::json error_json(const Error& e) {
  return {{"error", std::string(to_string(e.code()))}, {"message", e.what()}, {"exit_code", exit_code_for(e.code())}};
}

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

geometry::HyperplaneSet fit_hyperplanes(const AuditDataset& dataset, const AttributeSchema& schema,
                                        const FitParams& params) {
  std::vector<const DatasetRecord*> rows;
  for (const auto& r : dataset.records) {
    if (r.latent && r.annotations) rows.push_back(&r);
  }
  if (rows.empty()) throw Error(ErrorCode::Validation, "fit needs records with latents and annotations");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index dim = rows.front()->latent->dim();
  Eigen::MatrixXd X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& z = rows[static_cast<std::size_t>(i)]->latent->values;
    if (z.size() != dim) throw Error(ErrorCode::DimensionMismatch, "latents differ in dimension");
    X.row(i) = z.transpose();
  }

  geometry::HyperplaneSet set;
  set.space = dataset.header.space;
  set.dim = static_cast<int>(dim);
  for (const auto& def : schema.attributes) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto* a = rows[static_cast<std::size_t>(i)]->annotations->find(def.name);
      if (!a) throw Error(ErrorCode::MissingAttribute, "record " + rows[static_cast<std::size_t>(i)]->image_id +
                                                           " has no annotation for '" + def.name + "'");
      y[i] = a->mean_score;
    }
    const double neutral = params.neutral.value_or(def.neutral);
    geometry::HyperplaneFitInfo info;
    info.neutral = neutral;
    info.samples = static_cast<int>(n);
    if (def.kind == AttributeKind::continuous) {
      const auto model = numerics::ridge_fit(X, y, params.ridge_lambda);
      const Eigen::VectorXd pred = (X * model.weights).array() + model.intercept;
      const double ss_res = (y - pred).squaredNorm();
      const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
      info.method = "ridge";
      info.regularization = params.ridge_lambda;
      info.quality = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
      set.hyperplanes.push_back(geometry::hyperplane_from_model(model, def.name, neutral));
    } else {
      Eigen::VectorXd labels(n);
      for (Eigen::Index i = 0; i < n; ++i) labels[i] = y[i] > neutral ? 1.0 : -1.0;
      RngStream stream = derive_stream(params.seed, "svm/" + def.name);
      const auto model = numerics::svm_fit(X, labels, params.svm_c, params.svm_epochs, stream);
      Eigen::Index correct = 0;
      for (Eigen::Index i = 0; i < n; ++i) correct += (model.predict(X.row(i).transpose()) > 0.0) == (labels[i] > 0.0);
      info.method = "svm";
      info.regularization = params.svm_c;
      info.quality = static_cast<double>(correct) / static_cast<double>(n);
      // The SVM boundary already sits at decision 0.
      set.hyperplanes.push_back(geometry::hyperplane_from_model(model, def.name, 0.0));
    }
    set.fit_info.push_back(info);
  }
  return set;
}

std::vector<std::string> default_axes() { return {"skin", "hair_length", "gender"}; }

transect::TransectSpec default_transect_spec(const AttributeSchema& schema, const std::vector<std::string>& axes,
                                             int length) {
  transect::TransectSpec spec;
  for (const auto& name : axes) {
    const auto& def = schema.at(name);
    spec.axes.push_back(
        {name, transect::interpolate_decisions(def.step_range.min_decision, def.step_range.max_decision, length)});
  }
  for (const auto& def : schema.attributes) {
    if (std::find(axes.begin(), axes.end(), def.name) == axes.end()) spec.controlled.push_back({def.name, 0.0});
  }
  return spec;
}

worldsim::WorldModel build_world(const worldsim::WorldConfig& config, std::uint64_t seed) {
  RngStream stream = derive_stream(seed, "world");
  return worldsim::make_world(config, stream);
}

geometry::HyperplaneSet cmd_fit(const FitCommand& cmd) {
  const AuditDataset ds = load_dataset(cmd.dataset);
  const AttributeSchema schema = cmd.schema ? load_schema(*cmd.schema) : ds.header.schema;
  const auto problems = check_schema(schema);
  if (!problems.empty()) throw Error(ErrorCode::Validation, "schema: " + problems.front());
  auto set = fit_hyperplanes(ds, schema, cmd.params);
  save_json_file(cmd.out, hyperplanes_to_json(set));
  return set;
}

namespace {

transect::TransectSpec load_spec_or_default(const std::optional<fs::path>& path, const AttributeSchema& schema) {
  if (path) return transect::spec_from_json(load_json_file(*path));
  return default_transect_spec(schema, default_axes());
}

std::set<std::int64_t> existing_transects(const AuditDataset& ds, const transect::TransectSpec& spec) {
  std::map<std::int64_t, std::size_t> cells;
  for (const auto& r : ds.records) {
    if (r.transect) ++cells[r.transect->transect_id];
  }
  std::set<std::int64_t> done;
  for (const auto& [id, c] : cells) {
    if (c >= spec.cells()) done.insert(id);
  }
  return done;
}

}  // namespace

TransectSummary cmd_transect(const TransectCommand& cmd) {
  if (cmd.endpoint.has_value() == cmd.world.has_value()) {
    throw Error(ErrorCode::Validation, "transect needs exactly one of an endpoint or a world config");
  }
  if (cmd.count < 0) throw Error(ErrorCode::Validation, "count must be >= 0");
  const auto hyperplanes = geometry::hyperplanes_from_json(load_json_file(cmd.hyperplanes));

  std::optional<worldsim::WorldModel> world;
  std::unique_ptr<worldsim::WorldGenerator> world_gen;
  std::unique_ptr<bridge::BridgeClient> client;
  transect::Generator* generator = nullptr;
  AttributeSchema schema;
  if (cmd.world) {
    world = build_world(worldsim::world_config_from_json(load_json_file(*cmd.world)), cmd.world_seed);
    world_gen = std::make_unique<worldsim::WorldGenerator>(*world);
    generator = world_gen.get();
    schema = world->config.schema();
  } else {
    bridge::Endpoint ep = bridge::parse_endpoint(*cmd.endpoint);
    ep.timeout_ms = cmd.timeout_ms;
    client = std::make_unique<bridge::BridgeClient>(ep);
    client->hello();
    generator = client.get();
  }
  if (cmd.schema) schema = load_schema(*cmd.schema);

  const auto spec = load_spec_or_default(cmd.spec, schema);
  std::vector<geometry::Hyperplane> planes;
  for (const auto& a : spec.axes) planes.push_back(hyperplanes.at(a.attribute));
  for (const auto& c : spec.controlled) planes.push_back(hyperplanes.at(c.attribute));
  const auto directions = geometry::orthogonalize(planes, spec.ortho_mode);

  TransectSummary summary;
  transect::BatchOptions opts;
  opts.master_seed = cmd.seed;
  if (fs::exists(cmd.out)) {
    const AuditDataset existing = load_dataset(cmd.out);
    opts.skip = existing_transects(existing, spec);
    summary.existing_transects = opts.skip.size();
  } else {
    AuditDataset empty;
    empty.header = DatasetHeader{generator->info().space, generator->info().dim, schema};
    save_dataset(cmd.out, empty);
  }

  const std::int64_t chunk = std::max<std::int64_t>(cmd.chunk, 1);
  for (std::int64_t first = 0; first < cmd.count; first += chunk) {
    opts.first_id = first;
    const std::int64_t n = std::min(chunk, cmd.count - first);
    auto batch = transect::generate_batch(*generator, spec, hyperplanes, directions, n, opts);
    if (world) {
      worldsim::annotate_records(*world, batch.records, cmd.seed, "transect-annotate/" + std::to_string(first));
    } else {
      for (auto& r : batch.records) {
        for (const auto& name : client->classifier_names()) r.classifier_scores[name] = client->classify(r.image_id, name);
      }
    }
    append_records(cmd.out, batch.records);
    summary.generated_transects += batch.generated_transects;
    summary.records_written += batch.records.size();
    if (!batch.failures.empty()) {
      throw Error(ErrorCode::GeneratorFailure, std::to_string(batch.failures.size()) + " transect(s) failed; first: " +
                                                   batch.failures.front().message);
    }
  }
  return summary;
}

BiasReport cmd_audit(const AuditCommand& cmd) {
  const AuditDataset ds = load_dataset(cmd.dataset);
  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorCode::Validation, "dataset invalid (" + std::to_string(violations.size()) + " problems); " +
                                           v.record_id + ": " + v.rule + " " + v.detail);
  }
  const auto rules = cmd.rules ? analysis::prune_rules_from_json(load_json_file(*cmd.rules))
                               : analysis::PruneRules::defaults();
  BiasReport report = run_audit(ds, rules, cmd.config);

  std::ofstream(cmd.out, std::ios::binary) << report_to_json(report).dump(2) << '\n';
  const fs::path stem = cmd.out.parent_path() / cmd.out.stem();
  std::ofstream(fs::path(stem.string() + ".txt"), std::ios::binary) << report_to_text(report);
  std::ofstream(fs::path(stem.string() + "_stratified.csv"), std::ios::binary) << stratified_csv(report);
  std::ofstream(fs::path(stem.string() + "_ate.csv"), std::ios::binary) << ate_csv(report);
  std::ofstream(fs::path(stem.string() + "_long.csv"), std::ios::binary) << long_csv(report);
  return report;
}

SimulateResult simulate(const worldsim::WorldConfig& config, const SimulateCommand& cmd) {
  const worldsim::WorldModel world = build_world(config, cmd.seed);
  SimulateResult out;
  if (cmd.scenario == Scenario::observational) {
    if (cmd.n < 1) throw Error(ErrorCode::Validation, "observational scenario needs n >= 1");
    RngStream stream = derive_stream(cmd.seed, "observational");
    out.dataset = worldsim::sample_observational(world, cmd.targets, static_cast<std::size_t>(cmd.n), stream);
    return out;
  }

  RngStream fit_stream = derive_stream(cmd.seed, "fit-samples");
  std::vector<Eigen::VectorXd> latents(cmd.fit_samples);
  for (auto& z : latents) {
    z.resize(config.dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = fit_stream.normal();
  }
  out.fit_dataset = worldsim::annotate_latents(world, latents, cmd.seed, "fit-annotate");
  FitParams fit = cmd.fit;
  fit.seed = cmd.seed;
  const AttributeSchema schema = config.schema();
  out.hyperplanes = fit_hyperplanes(*out.fit_dataset, schema, fit);

  const auto spec = load_spec_or_default(cmd.spec, schema);
  const auto planes = transect::constraint_hyperplanes(spec, *out.hyperplanes);
  const auto directions = geometry::orthogonalize(planes, spec.ortho_mode);
  worldsim::WorldGenerator gen(world);
  transect::BatchOptions opts;
  opts.master_seed = cmd.seed;
  auto batch = transect::generate_batch(gen, spec, *out.hyperplanes, directions, cmd.n, opts);
  if (!batch.failures.empty()) {
    throw Error(ErrorCode::GeneratorFailure, "transect " + std::to_string(batch.failures.front().transect_id) +
                                                 " failed: " + batch.failures.front().message);
  }
  worldsim::annotate_records(world, batch.records, cmd.seed, "transect-annotate");
  out.dataset.header = DatasetHeader{config.space, config.dim, schema};
  out.dataset.records = std::move(batch.records);
  return out;
}

SimulateResult cmd_simulate(const SimulateCommand& cmd) {
  const worldsim::WorldConfig config = cmd.world ? worldsim::world_config_from_json(load_json_file(*cmd.world))
                                                 : worldsim::default_world_config();
  SimulateResult out = simulate(config, cmd);
  save_dataset(cmd.out, out.dataset);
  if (cmd.out_fit && out.fit_dataset) save_dataset(*cmd.out_fit, *out.fit_dataset);
  if (cmd.out_hyperplanes && out.hyperplanes) save_json_file(*cmd.out_hyperplanes, hyperplanes_to_json(*out.hyperplanes));
  return out;
}

worldsim::CorrelationTarget parse_correlation_target(const std::string& text) {
  const auto colon = text.find(':');
  const auto eq = text.find('=');
  if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
    throw Error(ErrorCode::Parse, "correlation target '" + text + "' is not A:B=VALUE");
  }
  worldsim::CorrelationTarget t{text.substr(0, colon), text.substr(colon + 1, eq - colon - 1), 0.0};
  try {
    t.value = std::stod(text.substr(eq + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::Parse, "correlation target '" + text + "' has a bad value");
  }
  return t;
}

}  // namespace latent_audit::pipeline
