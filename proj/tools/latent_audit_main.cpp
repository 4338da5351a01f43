#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "latent_audit/pipeline.hpp"

namespace la = latent_audit;
namespace pl = latent_audit::pipeline;

namespace {

void configure_logging() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("AUDIT_LOG")) {
    const std::string s = level;
    if (s == "debug") spdlog::set_level(spdlog::level::debug);
    if (s == "info") spdlog::set_level(spdlog::level::info);
  }
  spdlog::set_pattern("[%H:%M:%S] %l %v");
}

std::vector<std::vector<std::string>> split_groups(const std::vector<std::string>& specs) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : specs) {
    std::vector<std::string> group;
    std::size_t start = 0;
    while (start <= s.size()) {
      const auto comma = s.find(',', start);
      const auto end = comma == std::string::npos ? s.size() : comma;
      if (end > start) group.push_back(s.substr(start, end - start));
      start = end + 1;
    }
    if (!group.empty()) out.push_back(std::move(group));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Latent-space transect audits of face attribute classifiers"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

  pl::FitCommand fit;
  std::optional<std::string> fit_schema;
  auto* fit_cmd = app.add_subcommand("fit", "Fit attribute hyperplanes from annotated latents");
  fit_cmd->add_option("--dataset", fit.dataset, "Annotated latent dataset (JSONL)")->required();
  fit_cmd->add_option("--schema", fit_schema, "Attribute schema (defaults to the dataset header)");
  fit_cmd->add_option("--out", fit.out, "Output hyperplanes file")->required();
  fit_cmd->add_option("--ridge-lambda", fit.params.ridge_lambda, "Ridge penalty")->capture_default_str();
  fit_cmd->add_option("--svm-c", fit.params.svm_c, "SVM C")->capture_default_str();
  fit_cmd->add_option("--svm-epochs", fit.params.svm_epochs, "SVM epochs")->capture_default_str();
  fit_cmd->add_option("--neutral", fit.params.neutral, "Neutral score (default: per schema attribute)");
  fit_cmd->add_option("--seed", fit.params.seed, "Seed")->capture_default_str();

  pl::TransectCommand tr;
  std::optional<std::string> tr_spec, tr_endpoint, tr_world, tr_schema;
  auto* tr_cmd = app.add_subcommand("transect", "Generate matched transects");
  tr_cmd->add_option("--hyperplanes", tr.hyperplanes, "Hyperplanes file")->required();
  tr_cmd->add_option("--spec", tr_spec, "Transect spec (default 2x2x2 skin, hair_length, gender)");
  tr_cmd->add_option("--count", tr.count, "Number of transects")->capture_default_str();
  tr_cmd->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  auto* ep_opt = tr_cmd->add_option("--endpoint", tr_endpoint, "Generator server: HOST:PORT or stdio:COMMAND");
  auto* world_opt = tr_cmd->add_option("--world", tr_world, "World config for the in-process generator");
  ep_opt->excludes(world_opt);
  tr_cmd->add_option("--world-seed", tr.world_seed, "Seed the world was built with")->capture_default_str();
  tr_cmd->add_option("--schema", tr_schema, "Schema for the output header");
  tr_cmd->add_option("--timeout-ms", tr.timeout_ms, "Per-request timeout")->capture_default_str();
  tr_cmd->add_option("--out", tr.out, "Output dataset (appended to when it exists)")->required();

  pl::AuditCommand au;
  std::optional<std::string> au_rules;
  std::string loss = "zero_one";
  std::vector<std::string> intersections, balance_by;
  auto* au_cmd = app.add_subcommand("audit", "Prune, stratify and regress classifier errors");
  au_cmd->add_option("--dataset", au.dataset, "Annotated and classified dataset")->required();
  au_cmd->add_option("--rules", au_rules, "Prune rules (default: 0.75 fakeness and the ambiguous ranges)");
  au_cmd->add_option("--classifier", au.config.classifier, "Classifier name")->required();
  au_cmd->add_option("--target", au.config.target, "Target attribute")->capture_default_str();
  au_cmd->add_option("--loss", loss, "abs | zero_one")->check(CLI::IsMember({"abs", "zero_one"}))->capture_default_str();
  au_cmd->add_option("--threshold", au.config.loss.threshold, "Decision threshold for zero_one")->capture_default_str();
  au_cmd->add_option("--lambda", au.config.lambda, "Inverse L2 penalty")->capture_default_str();
  au_cmd->add_option("--bootstrap", au.config.bootstrap, "Bootstrap replicates (0 to skip)")->capture_default_str();
  au_cmd->add_option("--seed", au.config.seed, "Seed")->capture_default_str();
  au_cmd->add_option("--intersect", intersections, "Comma-separated attributes for an intersectional table");
  au_cmd->add_option("--balance-by", balance_by, "Balance grouping attributes (default: target)");
  au_cmd->add_option("--out", au.out, "Report JSON; .txt and .csv files are written beside it")->required();

  pl::SimulateCommand sim;
  std::optional<std::string> sim_world, sim_spec, sim_fit, sim_planes;
  std::string scenario = "matched";
  std::vector<std::string> corr;
  auto* sim_cmd = app.add_subcommand("simulate", "Produce a synthetic annotated dataset");
  sim_cmd->add_option("--world", sim_world, "World config (default built-in world)");
  sim_cmd->add_option("--scenario", scenario, "matched | observational")
      ->check(CLI::IsMember({"matched", "observational"}))
      ->capture_default_str();
  sim_cmd->add_option("--corr", corr, "Observational correlation target A:B=VALUE");
  sim_cmd->add_option("-n,--n", sim.n, "Transects (matched) or images (observational)")->capture_default_str();
  sim_cmd->add_option("--fit-samples", sim.fit_samples, "Latents annotated for hyperplane fitting")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  sim_cmd->add_option("--spec", sim_spec, "Transect spec");
  sim_cmd->add_option("--out", sim.out, "Output dataset")->required();
  sim_cmd->add_option("--out-fit", sim_fit, "Also write the fit sample");
  sim_cmd->add_option("--out-hyperplanes", sim_planes, "Also write the fitted hyperplanes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    pl::set_threads(threads);
    if (*fit_cmd) {
      if (fit_schema) fit.schema = *fit_schema;
      const auto set = pl::cmd_fit(fit);
      for (std::size_t i = 0; i < set.hyperplanes.size(); ++i) {
        spdlog::info("{}: {} quality {:.4f}", set.hyperplanes[i].attribute, set.fit_info[i].method,
                     set.fit_info[i].quality);
      }
    } else if (*tr_cmd) {
      if (tr_spec) tr.spec = *tr_spec;
      if (tr_endpoint) tr.endpoint = *tr_endpoint;
      if (tr_world) tr.world = *tr_world;
      if (tr_schema) tr.schema = *tr_schema;
      const auto s = pl::cmd_transect(tr);
      spdlog::info("{} transects already present, {} generated, {} records written", s.existing_transects,
                   s.generated_transects, s.records_written);
    } else if (*au_cmd) {
      if (au_rules) au.rules = *au_rules;
      au.config.loss.mode = la::analysis::loss_mode_from_string(loss);
      au.config.intersections = split_groups(intersections);
      for (const auto& g : split_groups(balance_by)) au.config.balance_group_by.insert(au.config.balance_group_by.end(), g.begin(), g.end());
      const auto report = pl::cmd_audit(au);
      std::cout << la::report_to_text(report);
    } else if (*sim_cmd) {
      if (sim_world) sim.world = *sim_world;
      if (sim_spec) sim.spec = *sim_spec;
      if (sim_fit) sim.out_fit = *sim_fit;
      if (sim_planes) sim.out_hyperplanes = *sim_planes;
      sim.scenario = scenario == "matched" ? pl::Scenario::matched : pl::Scenario::observational;
      for (const auto& c : corr) sim.targets.push_back(pl::parse_correlation_target(c));
      const auto r = pl::cmd_simulate(sim);
      spdlog::info("wrote {} records to {}", r.dataset.size(), sim.out.string());
    }
  } catch (const la::Error& e) {
    std::cerr << pl::error_json(e).dump() << '\n';
    return pl::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "Internal"}, {"message", e.what()}, {"exit_code", 1}}.dump() << '\n';
    return 1;
  }
  return 0;
}
