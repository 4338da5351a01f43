#include "latent_audit/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "latent_audit/dataset_io.hpp"
#include "latent_audit/numerics.hpp"

namespace latent_audit::worldsim {

using numerics::sigmoid;

AttributeSchema WorldConfig::schema() const {
  AttributeSchema s;
  for (const auto& a : attributes) s.attributes.push_back(a.def);
  return s;
}

nlohmann::json world_config_to_json(const WorldConfig& config) {
  nlohmann::json attrs = schema_to_json(config.schema()).at("attributes");
  for (std::size_t i = 0; i < config.attributes.size(); ++i) attrs[i]["offset"] = config.attributes[i].offset;
  nlohmann::json corr = nlohmann::json::array();
  for (const auto& c : config.correlations) corr.push_back({{"a", c.a}, {"b", c.b}, {"value", c.value}});
  nlohmann::json clfs = nlohmann::json::array();
  for (const auto& c : config.classifiers) {
    clfs.push_back({{"name", c.name},
                    {"target", c.target},
                    {"sharpness", c.sharpness},
                    {"intercept", c.intercept},
                    {"coefficients", c.coefficients},
                    {"noise", c.noise},
                    {"threshold", c.threshold}});
  }
  return {{"dim", config.dim},
          {"space", config.space},
          {"sharpness", config.sharpness},
          {"annotator_noise", config.annotator_noise},
          {"annotators", config.annotators},
          {"attributes", std::move(attrs)},
          {"correlations", std::move(corr)},
          {"fakeness",
           {{"base", config.fakeness.base},
            {"slope", config.fakeness.slope},
            {"artifact_rating_prob", config.fakeness.artifact_rating_prob},
            {"clean_rating_prob", config.fakeness.clean_rating_prob}}},
          {"classifiers", std::move(clfs)}};
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  // Without "attributes" the built-in world is the base, so "{}" means the
  // default world and small overrides stay small.
  WorldConfig c;
  const bool own_attributes = j.contains("attributes");
  if (!own_attributes) c = default_world_config();
  try {
    c.dim = j.value("dim", c.dim);
    c.space = j.value("space", c.space);
    c.sharpness = j.value("sharpness", c.sharpness);
    c.annotator_noise = j.value("annotator_noise", c.annotator_noise);
    c.annotators = j.value("annotators", c.annotators);
    if (own_attributes) {
      const AttributeSchema schema = schema_from_json(nlohmann::json{{"attributes", j.at("attributes")}});
      for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
        c.attributes.push_back({schema.attributes[i], j.at("attributes")[i].value("offset", 0.0)});
      }
    }
    if (j.contains("correlations")) {
      c.correlations.clear();
      for (const auto& o : j.at("correlations")) {
        c.correlations.push_back({o.at("a").get<std::string>(), o.at("b").get<std::string>(), o.at("value").get<double>()});
      }
    }
    if (j.contains("fakeness")) {
      const auto& f = j.at("fakeness");
      c.fakeness.base = f.value("base", c.fakeness.base);
      c.fakeness.slope = f.value("slope", c.fakeness.slope);
      c.fakeness.artifact_rating_prob = f.value("artifact_rating_prob", c.fakeness.artifact_rating_prob);
      c.fakeness.clean_rating_prob = f.value("clean_rating_prob", c.fakeness.clean_rating_prob);
    }
    if (j.contains("classifiers")) {
      c.classifiers.clear();
      for (const auto& o : j.at("classifiers")) {
        BiasedClassifier b;
        b.name = o.at("name").get<std::string>();
        b.target = o.at("target").get<std::string>();
        b.sharpness = o.value("sharpness", 0.0);
        b.intercept = o.value("intercept", 0.0);
        b.coefficients = o.value("coefficients", std::map<std::string, double>{});
        b.noise = o.value("noise", 0.0);
        b.threshold = o.value("threshold", 0.5);
        c.classifiers.push_back(std::move(b));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("world config: ") + e.what());
  }
  const auto problems = check_schema(c.schema());
  if (!problems.empty()) throw Error(ErrorCode::Validation, "world config: " + problems.front());
  if (c.annotators < 1) throw Error(ErrorCode::Validation, "world config: annotators must be >= 1");
  return c;
}

namespace {

AttributeDef attr(std::string name, AttributeKind kind, int levels, std::vector<double> bins,
                  std::vector<std::string> labels, double lo, double hi) {
  AttributeDef a;
  a.name = std::move(name);
  a.kind = kind;
  a.levels = levels;
  a.bins = std::move(bins);
  a.bin_labels = std::move(labels);
  a.step_range = {lo, hi};
  return a;
}

}  // namespace

WorldConfig default_world_config() {
  WorldConfig c;
  c.attributes = {
      {attr("gender", AttributeKind::continuous, 5, {0.0, 0.5, 1.0}, {"male", "female"}, -1.75, 1.75), 0.0},
      {attr("hair_length", AttributeKind::continuous, 4, {0.0, 0.5, 1.0}, {"short", "long"}, -1.5, 1.5), 0.0},
      {attr("skin", AttributeKind::continuous, 6, {0.0, 0.5, 1.0}, {"light", "dark"}, -1.5, 1.7), 0.0},
      {attr("age", AttributeKind::continuous, 6, {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}, {"young", "adult", "senior"}, -1.5,
            1.5),
       0.0},
      {attr("smiling", AttributeKind::binary, 2, {0.0, 0.5, 1.0}, {"no", "yes"}, -1.0, 1.0), 0.0},
  };
  c.correlations = {{"hair_length", "gender", 0.5}};
  BiasedClassifier clf;
  clf.name = "gender_clf";
  clf.target = "gender";
  clf.sharpness = 2.0;
  clf.intercept = -1.0;
  clf.coefficients = {{"gender", 2.0}, {"hair_length", 1.5}, {"skin", 0.0}};
  clf.noise = 1.0;
  c.classifiers.push_back(std::move(clf));
  return c;
}

std::size_t WorldModel::attribute_index(const std::string& name) const {
  for (std::size_t i = 0; i < config.attributes.size(); ++i) {
    if (config.attributes[i].def.name == name) return i;
  }
  throw Error(ErrorCode::MissingAttribute, "world has no attribute '" + name + "'");
}

const BiasedClassifier& WorldModel::classifier(const std::string& name) const {
  for (const auto& c : config.classifiers) {
    if (c.name == name) return c;
  }
  throw Error(ErrorCode::UnknownClassifier, "world has no classifier '" + name + "'");
}

WorldModel make_world(const WorldConfig& config, RngStream& stream) {
  const auto na = static_cast<Eigen::Index>(config.attributes.size());
  if (na == 0) throw Error(ErrorCode::Validation, "world needs at least one attribute");
  if (na > config.dim) throw Error(ErrorCode::InvalidGram, "more attributes than latent dimensions");

  WorldModel world;
  world.config = config;
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(na, na);
  for (const auto& c : config.correlations) {
    const auto a = static_cast<Eigen::Index>(world.attribute_index(c.a));
    const auto b = static_cast<Eigen::Index>(world.attribute_index(c.b));
    if (a == b || !(std::abs(c.value) <= 1.0)) {
      throw Error(ErrorCode::InvalidGram, "bad loading correlation " + c.a + "/" + c.b);
    }
    G(a, b) = G(b, a) = c.value;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.eigenvalues().minCoeff() < -1e-12) {
    throw Error(ErrorCode::InvalidGram, "requested loading correlations are not positive semi-definite");
  }
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd L = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();  // G = L L'

  Eigen::MatrixXd gauss(config.dim, na);
  for (Eigen::Index j = 0; j < na; ++j) {
    for (Eigen::Index i = 0; i < config.dim; ++i) gauss(i, j) = stream.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(config.dim, na);
  const Eigen::MatrixXd W = Q * L.transpose();  // W'W = G

  for (Eigen::Index j = 0; j < na; ++j) world.loadings.push_back(W.col(j).normalized());
  world.gram.resize(na, na);
  for (Eigen::Index a = 0; a < na; ++a) {
    for (Eigen::Index b = 0; b < na; ++b) {
      world.gram(a, b) = world.loadings[static_cast<std::size_t>(a)].dot(world.loadings[static_cast<std::size_t>(b)]);
    }
  }
  return world;
}

std::vector<double> truth_scores(const WorldModel& world, const Eigen::VectorXd& z) {
  if (z.size() != world.config.dim) throw Error(ErrorCode::DimensionMismatch, "latent dimension does not match world");
  std::vector<double> s(world.attribute_count());
  for (std::size_t j = 0; j < s.size(); ++j) {
    s[j] = sigmoid(world.config.sharpness * (world.loadings[j].dot(z) + world.config.attributes[j].offset));
  }
  return s;
}

std::string latent_image_id(const std::string& prefix, const Eigen::VectorXd& z) {
  std::string text;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i) text += ',';
    text += format_real(z[i]);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return prefix + buf;
}

SynthImage synth_generate(const WorldModel& world, const Eigen::VectorXd& z) {
  return SynthImage{latent_image_id("w", z), truth_scores(world, z), z.norm()};
}

int quantize_response(double noisy_score, int levels) {
  const double top = static_cast<double>(levels - 1);
  const double level = std::floor(noisy_score * top + 0.5);
  return static_cast<int>(std::clamp(level, 0.0, top));
}

AnnotationRecord oracle_annotate(const WorldModel& world, const SynthImage& image, int n_annotators,
                                 RngStream& stream) {
  if (n_annotators < 1) throw Error(ErrorCode::Validation, "need at least one annotator");
  AnnotationRecord rec;
  const double sigma = world.config.annotator_noise;
  for (std::size_t j = 0; j < world.attribute_count(); ++j) {
    const AttributeDef& def = world.config.attributes[j].def;
    std::vector<int> raw;
    raw.reserve(static_cast<std::size_t>(n_annotators));
    for (int a = 0; a < n_annotators; ++a) {
      const double noise = sigma > 0.0 ? sigma * stream.normal() : 0.0;
      raw.push_back(quantize_response(image.scores[j] + noise, def.levels));
    }
    rec.attributes.emplace(def.name, summarize_responses(std::move(raw), def.levels));
  }

  // Fakeness on a five-level scale: 0 real ... 3 likely fake, 4 fake.
  const auto& fm = world.config.fakeness;
  const double excess = image.latent_norm - std::sqrt(static_cast<double>(world.config.dim));
  const bool artifact = stream.uniform() < sigmoid(fm.base + fm.slope * excess);
  const double high_prob = artifact ? fm.artifact_rating_prob : fm.clean_rating_prob;
  double total = 0.0;
  for (int a = 0; a < n_annotators; ++a) {
    int level;
    if (stream.uniform() < high_prob) {
      level = 3 + static_cast<int>(stream.uniform_index(2));
    } else {
      level = static_cast<int>(stream.uniform_index(3));
    }
    total += level / 4.0;
  }
  rec.fakeness = total / n_annotators;
  return rec;
}

double classifier_error_log_odds(const BiasedClassifier& classifier, const WorldModel& world,
                                 const std::vector<double>& scores, const std::string& image_id) {
  double psi = classifier.intercept;
  for (const auto& [name, gamma] : classifier.coefficients) psi += gamma * scores[world.attribute_index(name)];
  const double s_target = scores[world.attribute_index(classifier.target)];
  psi -= classifier.sharpness * std::abs(2.0 * s_target - 1.0);
  if (classifier.noise != 0.0) {
    // Standard logistic draw fixed by (image, classifier).
    RngStream s = derive_stream(fnv1a64(image_id), "classifier/" + classifier.name);
    const double u = s.uniform();
    psi += classifier.noise * numerics::logit(u);
  }
  return psi;
}

double biased_classify(const BiasedClassifier& classifier, const WorldModel& world, const SynthImage& image) {
  const double psi = classifier_error_log_odds(classifier, world, image.scores, image.image_id);
  const bool truth = image.scores[world.attribute_index(classifier.target)] > 0.5;
  return truth ? sigmoid(-psi) : sigmoid(psi);
}

namespace {

DatasetRecord make_record(const WorldModel& world, const Eigen::VectorXd& z, RngStream& stream) {
  const SynthImage img = synth_generate(world, z);
  DatasetRecord r;
  r.image_id = img.image_id;
  r.latent = LatentPoint{world.config.space, z};
  r.annotations = oracle_annotate(world, img, world.config.annotators, stream);
  for (const auto& c : world.config.classifiers) r.classifier_scores[c.name] = biased_classify(c, world, img);
  return r;
}

}  // namespace

void annotate_records(const WorldModel& world, std::vector<DatasetRecord>& records, std::uint64_t master_seed,
                      const std::string& label) {
  const auto n = static_cast<std::int64_t>(records.size());
  for (const auto& r : records) {
    if (!r.latent) throw Error(ErrorCode::Validation, "record " + r.image_id + " has no latent to annotate");
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& r = records[static_cast<std::size_t>(i)];
    RngStream stream = derive_stream(master_seed, label + "/" + std::to_string(i));
    const SynthImage img = synth_generate(world, r.latent->values);
    r.annotations = oracle_annotate(world, img, world.config.annotators, stream);
    for (const auto& c : world.config.classifiers) r.classifier_scores[c.name] = biased_classify(c, world, img);
  }
}

AuditDataset annotate_latents(const WorldModel& world, const std::vector<Eigen::VectorXd>& latents,
                              std::uint64_t master_seed, const std::string& label) {
  AuditDataset ds;
  ds.header = DatasetHeader{world.config.space, world.config.dim, world.config.schema()};
  ds.records.resize(latents.size());
  const auto n = static_cast<std::int64_t>(latents.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream stream = derive_stream(master_seed, label + "/" + std::to_string(i));
    ds.records[static_cast<std::size_t>(i)] = make_record(world, latents[static_cast<std::size_t>(i)], stream);
  }
  return ds;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Acceptance kernel for one target pair. Accepting z with probability
// exp(-(s_a - t(s_b))^2 / (2 h^2)) with t(s) = s (push toward positive
// correlation) or 1 - s (negative) raises |corr| as h shrinks.
struct PairKernel {
  std::size_t a = 0;
  std::size_t b = 0;
  double target = 0.0;
  bool active = false;
  bool negative = false;
  double log_h = 0.0;

  double weight(const std::vector<double>& s) const {
    if (!active) return 1.0;
    const double h = std::exp(log_h);
    const double tb = negative ? 1.0 - s[b] : s[b];
    const double d = s[a] - tb;
    return std::exp(-d * d / (2.0 * h * h));
  }
};

double weighted_corr(const std::vector<std::vector<double>>& scores, const std::vector<double>& weights,
                     std::size_t a, std::size_t b) {
  double sw = 0.0;
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sw += weights[i];
    ma += weights[i] * scores[i][a];
    mb += weights[i] * scores[i][b];
  }
  if (sw <= 0.0) return 0.0;
  ma /= sw;
  mb /= sw;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double da = scores[i][a] - ma;
    const double db = scores[i][b] - mb;
    sab += weights[i] * da * db;
    saa += weights[i] * da * da;
    sbb += weights[i] * db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

AuditDataset sample_observational(const WorldModel& world, const std::vector<CorrelationTarget>& targets,
                                  std::size_t n, RngStream& stream, double tolerance) {
  const auto dim = world.config.dim;
  auto draw = [&](RngStream& s) {
    Eigen::VectorXd z(dim);
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = s.normal();
    return z;
  };

  std::vector<PairKernel> kernels;
  for (const auto& t : targets) {
    if (!(std::abs(t.value) < 1.0)) throw Error(ErrorCode::UnachievableCorrelation, "target correlation must be in (-1,1)");
    PairKernel k;
    k.a = world.attribute_index(t.a);
    k.b = world.attribute_index(t.b);
    k.target = t.value;
    kernels.push_back(k);
  }

  // Pilot pool: tune each kernel's bandwidth by bisection on the importance-
  // weighted correlation, a few rounds of coordinate updates.
  RngStream pilot = stream.child("pilot");
  constexpr std::size_t kPilot = 20000;
  std::vector<std::vector<double>> pool(kPilot);
  for (auto& s : pool) s = truth_scores(world, draw(pilot));

  auto pool_weights = [&]() {
    std::vector<double> w(kPilot, 1.0);
    for (std::size_t i = 0; i < kPilot; ++i) {
      for (const auto& k : kernels) w[i] *= k.weight(pool[i]);
    }
    return w;
  };

  for (auto& k : kernels) {
    const double natural = weighted_corr(pool, std::vector<double>(kPilot, 1.0), k.a, k.b);
    if (std::abs(natural - k.target) <= tolerance / 2) continue;
    k.active = true;
    k.negative = k.target < natural;
  }
  for (int round = 0; round < 4; ++round) {
    for (auto& k : kernels) {
      if (!k.active) continue;
      double lo = std::log(1e-3);
      double hi = std::log(10.0);
      for (int it = 0; it < 40; ++it) {
        k.log_h = 0.5 * (lo + hi);
        const double c = weighted_corr(pool, pool_weights(), k.a, k.b);
        // Narrower kernel pushes the correlation further in its direction.
        const bool overshoot = k.negative ? c < k.target : c > k.target;
        if (overshoot) {
          lo = k.log_h;
        } else {
          hi = k.log_h;
        }
      }
    }
  }

  RngStream sampler = stream.child("accept");
  const std::size_t budget = std::max<std::size_t>(n, 1) * 2000;
  for (int attempt = 0; attempt < 5; ++attempt) {
    std::vector<Eigen::VectorXd> accepted;
    std::vector<std::vector<double>> scores;
    std::size_t tried = 0;
    while (accepted.size() < n && tried < budget) {
      ++tried;
      Eigen::VectorXd z = draw(sampler);
      const auto s = truth_scores(world, z);
      double w = 1.0;
      for (const auto& k : kernels) w *= k.weight(s);
      if (sampler.uniform() < w) {
        accepted.push_back(std::move(z));
        scores.push_back(s);
      }
    }
    if (accepted.size() < n) break;
    bool ok = true;
    for (const auto& k : kernels) {
      std::vector<double> xa;
      std::vector<double> xb;
      for (const auto& s : scores) {
        xa.push_back(s[k.a]);
        xb.push_back(s[k.b]);
      }
      if (std::abs(pearson(xa, xb) - k.target) > tolerance) ok = false;
    }
    if (ok) return annotate_latents(world, accepted, stream.master_seed(), stream.label() + "/annotate");
  }
  throw Error(ErrorCode::UnachievableCorrelation, "could not reach the requested score correlations within budget");
}

transect::GeneratorInfo WorldGenerator::info() const {
  return {world_.config.space, world_.config.dim, true};
}

transect::GeneratedImage WorldGenerator::generate(const LatentPoint& z) {
  if (z.dim() != world_.config.dim) throw Error(ErrorCode::DimensionMismatch, "latent dimension does not match world");
  std::string id = latent_image_id("w", z.values);
  std::lock_guard lock(mutex_);
  latents_.emplace(id, z.values);
  return {std::move(id), {}};
}

std::vector<std::string> WorldGenerator::classifier_names() const {
  std::vector<std::string> names;
  for (const auto& c : world_.config.classifiers) names.push_back(c.name);
  return names;
}

double WorldGenerator::classify(const std::string& image_id, const std::string& classifier) {
  Eigen::VectorXd z;
  {
    std::lock_guard lock(mutex_);
    auto it = latents_.find(image_id);
    if (it == latents_.end()) throw Error(ErrorCode::UnknownImage, "unknown image '" + image_id + "'");
    z = it->second;
  }
  const auto& clf = world_.classifier(classifier);
  return biased_classify(clf, world_, synth_generate(world_, z));
}

}  // namespace latent_audit::worldsim
