#pragma once

#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "latent_audit/core.hpp"
#include "latent_audit/rng.hpp"
#include "latent_audit/transect.hpp"

namespace latent_audit::worldsim {

// Synthetic ground truth: attribute j of latent z has score
// sigmoid(sharpness * (<w_j, z> + offset_j)) with unit loadings w_j whose
// Gram matrix is configurable. Annotators see the score through Gaussian
// noise and level quantization. Classifiers err with log-odds that are
// linear in the ground-truth scores.

struct WorldAttribute {
  AttributeDef def;
  double offset = 0.0;
};

struct LoadingCorrelation {
  std::string a;
  std::string b;
  double value = 0.0;
};

/// Each image is an "artifact" with probability
/// sigmoid(base + slope * (||z|| - sqrt(D))); artifacts draw high fakeness
/// ratings from most annotators.
struct FakenessModel {
  double base = -2.5;
  double slope = 1.5;
  double artifact_rating_prob = 0.85;
  double clean_rating_prob = 0.05;
};

/// Classifier under test with known injected bias.
///
/// Error log-odds: psi = intercept + sum_j coefficients[j] * s_j
///                       - sharpness * |2 s_target - 1| + noise * u_image
/// where u_image is a standard-logistic draw fixed by the image. The score
/// is sigmoid(-psi) on the true side of the target and sigmoid(psi) on the
/// other, so the absolute error equals sigmoid(psi).
struct BiasedClassifier {
  std::string name;
  std::string target;
  double sharpness = 0.0;
  double intercept = 0.0;
  std::map<std::string, double> coefficients;
  double noise = 0.0;
  double threshold = 0.5;
};

struct WorldConfig {
  int dim = 32;
  std::string space = "synth";
  double sharpness = 2.0;
  double annotator_noise = 0.1;
  int annotators = 5;
  std::vector<WorldAttribute> attributes;
  std::vector<LoadingCorrelation> correlations;
  FakenessModel fakeness;
  std::vector<BiasedClassifier> classifiers;

  AttributeSchema schema() const;
};

nlohmann::json world_config_to_json(const WorldConfig& config);
WorldConfig world_config_from_json(const nlohmann::json& j);

/// Attribute set used throughout the tests and the default simulation:
/// gender, hair_length, skin, age, smiling; hair/gender loadings correlated 0.5.
WorldConfig default_world_config();

struct WorldModel {
  WorldConfig config;
  std::vector<Eigen::VectorXd> loadings;
  Eigen::MatrixXd gram;

  std::size_t attribute_count() const { return config.attributes.size(); }
  std::size_t attribute_index(const std::string& name) const;
  const BiasedClassifier& classifier(const std::string& name) const;
};

/// Loadings with the requested pairwise inner products (factor construction
/// on a random orthonormal frame). Throws InvalidGram.
WorldModel make_world(const WorldConfig& config, RngStream& stream);

struct SynthImage {
  std::string image_id;
  std::vector<double> scores;  ///< config attribute order
  double latent_norm = 0.0;
};

std::vector<double> truth_scores(const WorldModel& world, const Eigen::VectorXd& z);
SynthImage synth_generate(const WorldModel& world, const Eigen::VectorXd& z);

/// Stable id for a latent: prefix + hex FNV-1a of its 17-digit decimal text.
std::string latent_image_id(const std::string& prefix, const Eigen::VectorXd& z);

/// Each response = round-half-up((score + N(0, sigma)) * (levels - 1)),
/// clamped to the level grid.
int quantize_response(double noisy_score, int levels);

AnnotationRecord oracle_annotate(const WorldModel& world, const SynthImage& image, int n_annotators,
                                 RngStream& stream);

double classifier_error_log_odds(const BiasedClassifier& classifier, const WorldModel& world,
                                 const std::vector<double>& scores, const std::string& image_id);
double biased_classify(const BiasedClassifier& classifier, const WorldModel& world, const SynthImage& image);

/// Records for the given latents, annotated and scored by every configured
/// classifier. Record i uses stream child "annotate/<i>" of `stream`.
AuditDataset annotate_latents(const WorldModel& world, const std::vector<Eigen::VectorXd>& latents,
                              std::uint64_t master_seed, const std::string& label);

/// Annotates and classifies existing records in place (records need latents).
void annotate_records(const WorldModel& world, std::vector<DatasetRecord>& records, std::uint64_t master_seed,
                      const std::string& label);

struct CorrelationTarget {
  std::string a;
  std::string b;
  double value = 0.0;
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Rejection-samples latents until the ground-truth score correlation of
/// each target pair is within tolerance; returns the annotated dataset.
/// Throws UnachievableCorrelation when the sample budget runs out.
AuditDataset sample_observational(const WorldModel& world, const std::vector<CorrelationTarget>& targets,
                                  std::size_t n, RngStream& stream, double tolerance = 0.05);

/// World as generator and classifier; remembers generated latents by id.
class WorldGenerator final : public transect::Generator, public transect::Classifier {
 public:
  explicit WorldGenerator(const WorldModel& world) : world_(world) {}

  transect::GeneratorInfo info() const override;
  transect::GeneratedImage generate(const LatentPoint& z) override;
  std::vector<std::string> classifier_names() const override;
  double classify(const std::string& image_id, const std::string& classifier) override;
  bool concurrent() const override { return true; }

 private:
  const WorldModel& world_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Eigen::VectorXd> latents_;
};

}  // namespace latent_audit::worldsim
