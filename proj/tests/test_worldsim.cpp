#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "latent_audit/dataset_io.hpp"
#include "latent_audit/numerics.hpp"
#include "latent_audit/worldsim.hpp"

using namespace latent_audit;
using namespace latent_audit::worldsim;

namespace {

WorldModel default_world(std::uint64_t seed = 1) {
  RngStream s(seed, "world");
  return make_world(default_world_config(), s);
}

Eigen::VectorXd gaussian(RngStream& s, int d) {
  Eigen::VectorXd z(d);
  for (int i = 0; i < d; ++i) z[i] = s.normal();
  return z;
}

}  // namespace

TEST_CASE("loadings are unit vectors with the requested Gram matrix") {
  const auto w = default_world();
  const auto h = w.attribute_index("hair_length");
  const auto g = w.attribute_index("gender");
  const auto sk = w.attribute_index("skin");
  for (const auto& l : w.loadings) CHECK(l.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.loadings[h].dot(w.loadings[g]) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(std::abs(w.loadings[h].dot(w.loadings[sk])) < 1e-10);
}

TEST_CASE("non-PSD correlation requests are rejected") {
  auto cfg = default_world_config();
  cfg.correlations = {{"gender", "skin", 0.9}, {"skin", "age", 0.9}, {"gender", "age", -0.9}};
  RngStream s(1, "w");
  CHECK_THROWS_AS(make_world(cfg, s), Error);
  cfg.correlations = {{"gender", "gender", 0.5}};
  CHECK_THROWS_AS(make_world(cfg, s), Error);
}

TEST_CASE("truth scores follow the logistic link") {
  const auto w = default_world();
  RngStream s(2, "z");
  const auto z = gaussian(s, 32);
  const auto scores = truth_scores(w, z);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    CHECK(scores[j] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0 * w.loadings[j].dot(z)))));
  }
  CHECK_THROWS_AS(truth_scores(w, Eigen::VectorXd::Zero(31)), Error);
}

TEST_CASE("quantization rounds half up on the level index") {
  CHECK(quantize_response(0.5, 6) == 3);
  CHECK(quantize_response(0.5, 5) == 2);
  CHECK(quantize_response(0.49, 2) == 0);
  CHECK(quantize_response(1.4, 4) == 3);
  CHECK(quantize_response(-0.3, 4) == 0);
}

TEST_CASE("noise-free annotators agree") {
  auto cfg = default_world_config();
  cfg.annotator_noise = 0.0;
  RngStream ws(1, "world");
  const auto w = make_world(cfg, ws);
  RngStream s(3, "a");
  const auto img = synth_generate(w, gaussian(s, 32));
  const auto ann = oracle_annotate(w, img, 5, s);
  for (const auto& [name, a] : ann.attributes) {
    CHECK(a.std_score == 0.0);
    CHECK(std::adjacent_find(a.raw_responses.begin(), a.raw_responses.end(), std::not_equal_to<>()) ==
          a.raw_responses.end());
  }
}

TEST_CASE("annotation spread tracks the configured noise") {
  // Independent Monte-Carlo of the response model with a separate stream.
  const auto w = default_world();
  const auto g = w.attribute_index("gender");
  RngStream s(4, "spread");
  RngStream oracle(4, "oracle");
  std::vector<double> got, want;
  for (int i = 0; i < 3000; ++i) {
    const auto img = synth_generate(w, gaussian(s, 32));
    got.push_back(oracle_annotate(w, img, 5, s).attributes.at("gender").std_score);
    std::vector<int> raw;
    for (int a = 0; a < 5; ++a) {
      const double level = std::floor((img.scores[g] + 0.1 * oracle.normal()) * 4 + 0.5);
      raw.push_back(static_cast<int>(std::clamp(level, 0.0, 4.0)));
    }
    want.push_back(summarize_responses(raw, 5).std_score);
  }
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  double mean_got = 0, mean_want = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    mean_got += got[i];
    mean_want += want[i];
  }
  CHECK(mean_got / got.size() == doctest::Approx(mean_want / want.size()).epsilon(0.05));
  CHECK(std::abs(got[got.size() / 2] - want[want.size() / 2]) <= 0.1);
}

TEST_CASE("fakeness rises with latent norm") {
  const auto w = default_world();
  RngStream s(5, "fake");
  int typical_pruned = 0, extreme_pruned = 0;
  for (int i = 0; i < 2000; ++i) {
    auto z = gaussian(s, 32);
    typical_pruned += oracle_annotate(w, synth_generate(w, z), 5, s).fakeness >= 0.75 ? 1 : 0;
    z *= 1.5;
    extreme_pruned += oracle_annotate(w, synth_generate(w, z), 5, s).fakeness >= 0.75 ? 1 : 0;
  }
  CHECK(typical_pruned < 200);
  CHECK(extreme_pruned > 4 * typical_pruned);
}

TEST_CASE("biased classifier limits") {
  const auto w = default_world();
  BiasedClassifier flat;
  flat.name = "flat";
  flat.target = "gender";
  std::vector<double> scores(w.attribute_count(), 0.9);
  SynthImage img{"img", scores, 5.0};
  CHECK(biased_classify(flat, w, img) == 0.5);

  BiasedClassifier sharp = flat;
  sharp.sharpness = 200;
  CHECK(biased_classify(sharp, w, img) == doctest::Approx(1.0));
  img.scores[w.attribute_index("gender")] = 0.1;
  CHECK(biased_classify(sharp, w, img) == doctest::Approx(0.0));
}

TEST_CASE("absolute error equals the sigmoid of the error log-odds") {
  const auto w = default_world();
  const auto& clf = w.classifier("gender_clf");
  RngStream s(6, "err");
  for (int i = 0; i < 50; ++i) {
    const auto img = synth_generate(w, gaussian(s, 32));
    const double y = img.scores[w.attribute_index("gender")] > 0.5 ? 1.0 : 0.0;
    const double psi = classifier_error_log_odds(clf, w, img.scores, img.image_id);
    CHECK(std::abs(biased_classify(clf, w, img) - y) == doctest::Approx(numerics::sigmoid(psi)));
  }
}

TEST_CASE("classifier noise is fixed per image") {
  const auto w = default_world();
  const auto& clf = w.classifier("gender_clf");
  RngStream s(7, "n");
  const auto img = synth_generate(w, gaussian(s, 32));
  CHECK(biased_classify(clf, w, img) == biased_classify(clf, w, img));
  SynthImage other = img;
  other.image_id = "different";
  CHECK(biased_classify(clf, w, img) != biased_classify(clf, w, other));
}

TEST_CASE("annotate_latents is independent of thread count") {
  const auto w = default_world();
  RngStream s(8, "lat");
  std::vector<Eigen::VectorXd> latents;
  for (int i = 0; i < 200; ++i) latents.push_back(gaussian(s, 32));
  omp_set_num_threads(1);
  std::ostringstream a, b;
  write_dataset(a, annotate_latents(w, latents, 3, "x"));
  omp_set_num_threads(4);
  write_dataset(b, annotate_latents(w, latents, 3, "x"));
  CHECK(a.str() == b.str());
  const auto ds = annotate_latents(w, latents, 3, "x");
  CHECK(validate_dataset(ds).empty());
}

TEST_CASE("observational sampling hits the target correlation") {
  const auto w = default_world();
  RngStream s(9, "obs");
  const auto ds = sample_observational(w, {{"hair_length", "skin", 0.8}}, 3000, s);
  REQUIRE(ds.size() == 3000);
  std::vector<double> h, k;
  for (const auto& r : ds.records) {
    const auto sc = truth_scores(w, r.latent->values);
    h.push_back(sc[w.attribute_index("hair_length")]);
    k.push_back(sc[w.attribute_index("skin")]);
  }
  CHECK(std::abs(pearson(h, k) - 0.8) <= 0.05);
}

TEST_CASE("negative and zero targets") {
  const auto w = default_world();
  RngStream s(10, "neg");
  const auto ds = sample_observational(w, {{"age", "skin", -0.5}}, 2000, s);
  std::vector<double> a, k;
  for (const auto& r : ds.records) {
    const auto sc = truth_scores(w, r.latent->values);
    a.push_back(sc[w.attribute_index("age")]);
    k.push_back(sc[w.attribute_index("skin")]);
  }
  CHECK(std::abs(pearson(a, k) + 0.5) <= 0.05);
  RngStream z(11, "zero");
  CHECK(sample_observational(w, {{"age", "skin", 0.0}}, 500, z).size() == 500);
}

TEST_CASE("unreachable correlation is reported") {
  const auto w = default_world();
  RngStream s(12, "bad");
  CHECK_THROWS_AS(sample_observational(w, {{"age", "skin", 1.0}}, 100, s), Error);
  // No joint distribution has this correlation matrix.
  try {
    RngStream t(12, "bad2");
    sample_observational(w, {{"gender", "skin", 0.9}, {"skin", "age", 0.9}, {"gender", "age", -0.9}}, 200, t);
    FAIL("expected UnachievableCorrelation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnachievableCorrelation);
  }
}

TEST_CASE("world generator remembers latents") {
  const auto w = default_world();
  WorldGenerator gen(w);
  RngStream s(13, "gen");
  const LatentPoint z{"synth", gaussian(s, 32)};
  const auto img = gen.generate(z);
  CHECK(img.image_id == gen.generate(z).image_id);
  CHECK(gen.classify(img.image_id, "gender_clf") == biased_classify(w.classifier("gender_clf"), w, synth_generate(w, z.values)));
  CHECK_THROWS_AS(gen.classify("nope", "gender_clf"), Error);
  CHECK_THROWS_AS(gen.classify(img.image_id, "nope"), Error);
  CHECK_THROWS_AS(gen.generate(LatentPoint{"synth", Eigen::VectorXd::Zero(3)}), Error);
}

TEST_CASE("world config JSON round-trip") {
  const auto cfg = default_world_config();
  const auto back = world_config_from_json(world_config_to_json(cfg));
  CHECK(world_config_to_json(back).dump() == world_config_to_json(cfg).dump());
  CHECK(back.classifiers[0].coefficients.at("hair_length") == 1.5);
}

TEST_CASE("partial world configs start from the default world") {
  const auto def = world_config_to_json(default_world_config()).dump();
  CHECK(world_config_to_json(world_config_from_json(nlohmann::json::object())).dump() == def);
  const auto noisy = world_config_from_json(nlohmann::json{{"annotator_noise", 0.2}, {"correlations", nlohmann::json::array()}});
  CHECK(noisy.annotator_noise == 0.2);
  CHECK(noisy.correlations.empty());
  CHECK(noisy.attributes.size() == 5);
  CHECK(noisy.classifiers.size() == 1);
}
