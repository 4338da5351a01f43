// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <omp.h>

#include "latent_audit/analysis.hpp"
#include "latent_audit/geometry.hpp"
#include "latent_audit/pipeline.hpp"
#include "latent_audit/transect.hpp"
#include "latent_audit/worldsim.hpp"

using namespace latent_audit;

namespace {

struct AteInput {
  analysis::CovariateMatrix cov;
  std::vector<double> e;
};

const AteInput& ate_input() {
  static const AteInput input = [] {
    const auto config = worldsim::default_world_config();
    const auto world = pipeline::build_world(config, 1);
    RngStream s(1, "bench");
    std::vector<Eigen::VectorXd> latents(4000, Eigen::VectorXd(config.dim));
    for (auto& z : latents)
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = s.normal();
    const auto ds = worldsim::annotate_latents(world, latents, 1, "bench");
    AteInput in;
    in.cov = analysis::discretize(ds, config.schema());
    for (const auto& r : ds.records) in.e.push_back(r.classifier_scores.at("gender_clf"));
    return in;
  }();
  return input;
}

void BM_BootstrapSerial(benchmark::State& state) {
  const auto& in = ate_input();
  for (auto _ : state) {
    benchmark::DoNotOptimize(analysis::bootstrap_ate_serial(in.cov, in.e, 100, 1.0, RngStream(2, "bootstrap")));
  }
}

void BM_BootstrapParallel(benchmark::State& state) {
  const auto& in = ate_input();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(analysis::bootstrap_ate(in.cov, in.e, 100, 1.0, RngStream(2, "bootstrap")));
  }
}

struct BatchInput {
  worldsim::WorldModel world;
  transect::TransectSpec spec;
  geometry::HyperplaneSet planes;
  geometry::DirectionSet directions;
};

const BatchInput& batch_input() {
  static const BatchInput input = [] {
    pipeline::SimulateCommand cmd;
    cmd.n = 1;
    cmd.fit_samples = 2000;
    const auto config = worldsim::default_world_config();
    const auto sim = pipeline::simulate(config, cmd);
    BatchInput in{pipeline::build_world(config, 0), {}, *sim.hyperplanes, {}};
    in.spec = pipeline::default_transect_spec(config.schema(), pipeline::default_axes());
    in.directions = geometry::orthogonalize(transect::constraint_hyperplanes(in.spec, in.planes), in.spec.ortho_mode);
    return in;
  }();
  return input;
}

void BM_BatchSerial(benchmark::State& state) {
  const auto& in = batch_input();
  worldsim::WorldGenerator gen(in.world);
  for (auto _ : state) {
    benchmark::DoNotOptimize(transect::generate_batch_serial(gen, in.spec, in.planes, in.directions, 200, {}));
  }
}

void BM_BatchParallel(benchmark::State& state) {
  const auto& in = batch_input();
  worldsim::WorldGenerator gen(in.world);
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(transect::generate_batch(gen, in.spec, in.planes, in.directions, 200, {}));
  }
}

}  // namespace

BENCHMARK(BM_BootstrapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
