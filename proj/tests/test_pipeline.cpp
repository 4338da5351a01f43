#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "echo_server.hpp"
#include "latent_audit/dataset_io.hpp"
#include "latent_audit/framing.hpp"
#include "latent_audit/pipeline.hpp"

using namespace latent_audit;
using namespace latent_audit::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("la_pipeline_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
  static inline int counter = 0;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LATENT_AUDIT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("exit code classes") {
  CHECK(exit_code_for(ErrorCode::Parse) == 2);
  CHECK(exit_code_for(ErrorCode::Validation) == 2);
  CHECK(exit_code_for(ErrorCode::AmbiguousAfterPrune) == 2);
  CHECK(exit_code_for(ErrorCode::SingularSystem) == 3);
  CHECK(exit_code_for(ErrorCode::BootstrapFailure) == 3);
  CHECK(exit_code_for(ErrorCode::Timeout) == 4);
  CHECK(exit_code_for(ErrorCode::GeneratorFailure) == 4);
  CHECK(exit_code_for(ErrorCode::UnachievableCorrelation) == 5);
  const auto j = error_json(Error(ErrorCode::Timeout, "slow"));
  CHECK(j.at("error") == "Timeout");
  CHECK(j.at("exit_code") == 4);
}

TEST_CASE("correlation target parsing") {
  const auto t = parse_correlation_target("hair_length:skin=0.8");
  CHECK(t.a == "hair_length");
  CHECK(t.b == "skin");
  CHECK(t.value == 0.8);
  CHECK_THROWS_AS(parse_correlation_target("hair_length=0.8"), Error);
  CHECK_THROWS_AS(parse_correlation_target("a:b=x"), Error);
}

TEST_CASE("default transect spec") {
  const auto schema = worldsim::default_world_config().schema();
  const auto spec = default_transect_spec(schema, default_axes());
  CHECK(spec.cells() == 8);
  CHECK(spec.axes[1].attribute == "hair_length");
  CHECK(spec.axes[1].decisions == std::vector<double>{-1.5, 1.5});
  REQUIRE(spec.controlled.size() == 2);
  CHECK(spec.controlled[0].decision == 0.0);
  CHECK(check_spec(spec).empty());
}

TEST_CASE("fitted normals align with the true loadings") {
  const auto config = worldsim::default_world_config();
  const auto world = build_world(config, 5);
  RngStream s(5, "fit");
  std::vector<Eigen::VectorXd> latents(5000, Eigen::VectorXd(config.dim));
  for (auto& z : latents)
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = s.normal();
  const auto ds = worldsim::annotate_latents(world, latents, 5, "fit");
  const auto set = fit_hyperplanes(ds, config.schema(), {});
  for (std::size_t j = 0; j < world.attribute_count(); ++j) {
    const auto& h = set.at(world.config.attributes[j].def.name);
    const double cosine = h.normal.dot(world.loadings[j]) / h.normal.norm();
    INFO(h.attribute);
    CHECK(cosine >= 0.95);
  }
}

TEST_CASE("matched simulation produces complete transects") {
  SimulateCommand cmd;
  cmd.n = 40;
  cmd.fit_samples = 2000;
  cmd.seed = 3;
  const auto r = simulate(worldsim::default_world_config(), cmd);
  CHECK(r.dataset.size() == 320);
  CHECK(validate_dataset(r.dataset).empty());
  std::set<std::pair<std::int64_t, std::vector<int>>> cells;
  for (const auto& rec : r.dataset.records) cells.insert({rec.transect->transect_id, rec.transect->grid_index});
  CHECK(cells.size() == 320);
}

TEST_CASE("cmd_audit writes exactly what run_audit computes") {
  TempDir dir;
  SimulateCommand sim;
  sim.n = 60;
  sim.fit_samples = 2000;
  sim.seed = 4;
  sim.out = dir / "data.jsonl";
  const auto result = cmd_simulate(sim);

  AuditCommand au;
  au.dataset = sim.out;
  au.config.classifier = "gender_clf";
  au.config.bootstrap = 50;
  au.config.seed = 9;
  au.out = dir / "report.json";
  cmd_audit(au);

  const auto direct = run_audit(load_dataset(sim.out), analysis::PruneRules::defaults(), au.config);
  CHECK(slurp(au.out) == report_to_json(direct).dump(2) + "\n");
  CHECK(slurp(dir / "report.txt") == report_to_text(direct));
  CHECK(slurp(dir / "report_ate.csv") == ate_csv(direct));
  CHECK(slurp(dir / "report_stratified.csv") == stratified_csv(direct));
  CHECK(fs::exists(dir / "report_long.csv"));
  CHECK(direct.n == direct.prune_log.kept);
  CHECK(direct.prune_log.input == result.dataset.size());
}

TEST_CASE("cmd_audit rejects invalid datasets") {
  TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  AuditCommand au;
  au.dataset = dir / "bad.jsonl";
  au.config.classifier = "x";
  au.out = dir / "r.json";
  CHECK_THROWS_AS(cmd_audit(au), Error);
}

TEST_CASE("transect resume never duplicates cells") {
  TempDir dir;
  const auto config = worldsim::default_world_config();
  save_json_file(dir / "world.json", worldsim::world_config_to_json(config));
  SimulateCommand sim;
  sim.n = 1;
  sim.fit_samples = 2000;
  sim.seed = 2;
  sim.out = dir / "unused.jsonl";
  sim.out_hyperplanes = dir / "planes.json";
  cmd_simulate(sim);

  TransectCommand tr;
  tr.hyperplanes = dir / "planes.json";
  tr.world = dir / "world.json";
  tr.world_seed = 2;
  tr.seed = 7;
  tr.chunk = 3;
  tr.out = dir / "t.jsonl";
  tr.count = 5;
  auto s1 = cmd_transect(tr);
  CHECK(s1.generated_transects == 5);
  tr.count = 10;
  auto s2 = cmd_transect(tr);
  CHECK(s2.existing_transects == 5);
  CHECK(s2.generated_transects == 5);
  auto s3 = cmd_transect(tr);
  CHECK(s3.generated_transects == 0);

  const auto ds = load_dataset(tr.out);
  CHECK(ds.size() == 80);
  std::set<std::pair<std::int64_t, std::vector<int>>> cells;
  for (const auto& r : ds.records) cells.insert({r.transect->transect_id, r.transect->grid_index});
  CHECK(cells.size() == 80);

  // Same latents as a single uninterrupted run.
  tr.out = dir / "fresh.jsonl";
  cmd_transect(tr);
  const auto fresh = load_dataset(tr.out);
  std::set<std::string> a, b;
  for (const auto& r : ds.records) a.insert(r.image_id);
  for (const auto& r : fresh.records) b.insert(r.image_id);
  CHECK(a == b);
}

TEST_CASE("transect over the wire protocol") {
  TempDir dir;
  testing::EchoServer server({});
  geometry::HyperplaneSet set;
  set.space = "echo";
  set.dim = 4;
  set.hyperplanes.push_back({"a", Eigen::Vector4d(1, 0, 0, 0), 0.0});
  set.hyperplanes.push_back({"b", Eigen::Vector4d(0, 1, 0, 0), 0.0});
  save_json_file(dir / "planes.json", hyperplanes_to_json(set));
  transect::TransectSpec spec;
  spec.axes.push_back({"a", {-2.0, 2.0}});
  spec.controlled.push_back({"b", 0.5});
  save_json_file(dir / "spec.json", transect::spec_to_json(spec));
  AttributeSchema schema;
  AttributeDef a, b;
  a.name = "a";
  b.name = "b";
  schema.attributes = {a, b};
  save_schema(dir / "schema.json", schema);

  TransectCommand tr;
  tr.hyperplanes = dir / "planes.json";
  tr.spec = dir / "spec.json";
  tr.schema = dir / "schema.json";
  tr.endpoint = "127.0.0.1:" + std::to_string(server.port());
  tr.count = 6;
  tr.out = dir / "wire.jsonl";
  const auto s = cmd_transect(tr);
  CHECK(s.records_written == 12);
  const auto ds = load_dataset(tr.out);
  REQUIRE(ds.size() == 12);
  for (const auto& r : ds.records) {
    const auto& z = r.latent->values;
    CHECK(r.image_id == bridge::echo_image_id(z));
    CHECK(r.classifier_scores.at("echo") == doctest::Approx(bridge::echo_score(z)).epsilon(1e-15));
    CHECK(z[1] == doctest::Approx(0.5));
    CHECK(std::abs(std::abs(z[0]) - 2.0) < 1e-9);
  }
}

TEST_CASE("transect needs exactly one backend") {
  TransectCommand tr;
  tr.out = "unused";
  CHECK_THROWS_AS(cmd_transect(tr), Error);
}

TEST_CASE("CLI exit codes") {
  TempDir dir;
  const std::string data = (dir / "d.jsonl").string();
  CHECK(run_cli("simulate -n 20 --fit-samples 1500 --seed 1 --out " + data) == 0);
  CHECK(run_cli("audit --dataset " + data + " --classifier gender_clf --bootstrap 20 --out " +
                (dir / "r.json").string()) == 0);
  CHECK(fs::exists(dir / "r_ate.csv"));
  CHECK(run_cli("audit --dataset " + (dir / "missing.jsonl").string() + " --classifier x --out " +
                (dir / "r2.json").string()) == 2);
  CHECK(run_cli("audit --dataset " + data + " --classifier no_such --out " + (dir / "r3.json").string()) == 2);
  CHECK(run_cli("simulate --scenario observational --corr age:skin=1.0 -n 10 --out " + (dir / "o.jsonl").string()) ==
        5);
  CHECK(run_cli("nonsense") == 2);
  CHECK(run_cli("transect --hyperplanes " + (dir / "none.json").string() + " --endpoint 127.0.0.1:" +
                std::to_string(testing::dead_port()) + " --timeout-ms 100 --out " + (dir / "t.jsonl").string()) != 0);
}

TEST_CASE("CLI transect against a dead port exits with the connectivity code") {
  TempDir dir;
  geometry::HyperplaneSet set;
  set.space = "echo";
  set.dim = 4;
  set.hyperplanes.push_back({"a", Eigen::Vector4d(1, 0, 0, 0), 0.0});
  save_json_file(dir / "planes.json", hyperplanes_to_json(set));
  CHECK(run_cli("transect --hyperplanes " + (dir / "planes.json").string() + " --endpoint 127.0.0.1:" +
                std::to_string(testing::dead_port()) + " --timeout-ms 100 --out " + (dir / "t.jsonl").string()) == 4);
}

TEST_CASE("hyperplane fit does not depend on the thread count") {
  const auto config = worldsim::default_world_config();
  const auto world = build_world(config, 6);
  RngStream s(6, "threads");
  std::vector<Eigen::VectorXd> latents(5000, Eigen::VectorXd(config.dim));
  for (auto& z : latents)
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = s.normal();
  const auto ds = worldsim::annotate_latents(world, latents, 6, "fit");
  set_threads(1);
  const auto one = hyperplanes_to_json(fit_hyperplanes(ds, config.schema(), {})).dump();
  set_threads(8);
  const auto eight = hyperplanes_to_json(fit_hyperplanes(ds, config.schema(), {})).dump();
  CHECK(one == eight);
}
