#include "latent_audit/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace latent_audit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Validation: return "Validation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroNormal: return "ZeroNormal";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::GeneratorFailure: return "GeneratorFailure";
    case ErrorCode::InvalidGram: return "InvalidGram";
    case ErrorCode::UnachievableCorrelation: return "UnachievableCorrelation";
    case ErrorCode::MissingAttribute: return "MissingAttribute";
    case ErrorCode::AmbiguousAfterPrune: return "AmbiguousAfterPrune";
    case ErrorCode::MissingScores: return "MissingScores";
    case ErrorCode::BadCounts: return "BadCounts";
    case ErrorCode::BootstrapFailure: return "BootstrapFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ServerError: return "ServerError";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::UnknownClassifier: return "UnknownClassifier";
  }
  return "Unknown";
}

std::string AttributeDef::bin_label(std::size_t bin) const {
  if (bin < bin_labels.size()) return bin_labels[bin];
  return "b" + std::to_string(bin);
}

std::size_t AttributeDef::bin_of(double score) const {
  const std::size_t n = bin_count();
  for (std::size_t b = 0; b + 1 < n; ++b) {
    if (score < bins[b + 1]) return b;
  }
  return n - 1;
}

const AttributeDef* AttributeSchema::find(const std::string& name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const AttributeDef& AttributeSchema::at(const std::string& name) const {
  const auto* def = find(name);
  if (def == nullptr) throw Error(ErrorCode::MissingAttribute, "unknown attribute '" + name + "'");
  return *def;
}

std::optional<std::size_t> AttributeSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> check_schema(const AttributeSchema& schema) {
  std::vector<std::string> problems;
  std::set<std::string> seen;
  for (const auto& a : schema.attributes) {
    if (a.name.empty()) problems.push_back("attribute with empty name");
    if (!seen.insert(a.name).second) problems.push_back("duplicate attribute '" + a.name + "'");
    if (a.levels < 2) problems.push_back(a.name + ": levels must be >= 2");
    if (!(a.step_range.min_decision < a.step_range.max_decision)) {
      problems.push_back(a.name + ": step_range min must be below max");
    }
    if (a.neutral < 0.0 || a.neutral > 1.0) problems.push_back(a.name + ": neutral outside [0,1]");
    if (a.bins.size() < 2 || a.bins.front() != 0.0 || a.bins.back() != 1.0) {
      problems.push_back(a.name + ": bin edges must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < a.bins.size(); ++i) {
      if (!(a.bins[i - 1] < a.bins[i])) {
        problems.push_back(a.name + ": bin edges must be strictly increasing");
        break;
      }
    }
    if (!a.bin_labels.empty() && a.bins.size() >= 2 && a.bin_labels.size() != a.bin_count()) {
      problems.push_back(a.name + ": bin label count does not match bin count");
    }
  }
  return problems;
}

AttributeAnnotation summarize_responses(std::vector<int> raw, int levels) {
  AttributeAnnotation out;
  out.raw_responses = std::move(raw);
  if (out.raw_responses.empty() || levels < 2) return out;
  const double scale = 1.0 / static_cast<double>(levels - 1);
  double sum = 0.0;
  for (int r : out.raw_responses) sum += r * scale;
  const double n = static_cast<double>(out.raw_responses.size());
  out.mean_score = sum / n;
  double ss = 0.0;
  for (int r : out.raw_responses) {
    const double d = r * scale - out.mean_score;
    ss += d * d;
  }
  out.std_score = std::sqrt(ss / n);
  return out;
}

const AttributeAnnotation* AnnotationRecord::find(const std::string& name) const {
  auto it = attributes.find(name);
  return it == attributes.end() ? nullptr : &it->second;
}

namespace {

constexpr double kAnnotationTol = 1e-12;

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<Violation> validate_dataset(const AuditDataset& dataset) {
  std::vector<Violation> out;
  const auto& header = dataset.header;
  for (const auto& p : check_schema(header.schema)) out.push_back({"<header>", "schema", p});
  if (header.dim < 0) out.push_back({"<header>", "dim", "negative latent dimension"});

  std::set<std::string> ids;
  for (const auto& rec : dataset.records) {
    const std::string& id = rec.image_id;
    if (id.empty()) out.push_back({id, "empty id", "record has no image_id"});
    if (!ids.insert(id).second) out.push_back({id, "duplicate id", "image_id appears more than once"});

    if (rec.latent) {
      if (rec.latent->dim() != header.dim) {
        out.push_back({id, "dimension mismatch",
                       "latent has " + std::to_string(rec.latent->dim()) + " values, header says " +
                           std::to_string(header.dim)});
      }
      if (!rec.latent->values.allFinite()) out.push_back({id, "non-finite latent", "latent contains NaN or Inf"});
    }

    if (rec.transect) {
      const auto& t = rec.transect;
      if (t->axes.size() != t->grid_index.size() || t->axes.size() != t->intended.size()) {
        out.push_back({id, "transect coords", "axes, grid index and intended decisions differ in length"});
      }
    }

    if (rec.annotations) {
      const auto& ann = *rec.annotations;
      if (!in_unit(ann.fakeness)) out.push_back({id, "fakeness range", "fakeness " + fmt_double(ann.fakeness)});
      for (const auto& [name, a] : ann.attributes) {
        const AttributeDef* def = header.schema.find(name);
        if (def == nullptr) {
          out.push_back({id, "unknown attribute", name});
          continue;
        }
        bool raw_ok = true;
        for (int r : a.raw_responses) {
          if (r < 0 || r > def->levels - 1) raw_ok = false;
        }
        if (!raw_ok) {
          out.push_back({id, "response range", name + ": raw response outside [0, levels-1]"});
          continue;
        }
        if (!in_unit(a.mean_score)) out.push_back({id, "score range", name + ": mean_score outside [0,1]"});
        if (!std::isfinite(a.std_score) || a.std_score < 0.0) {
          out.push_back({id, "std range", name + ": std_score negative or non-finite"});
        }
        if (a.raw_responses.empty()) continue;
        const AttributeAnnotation expect = summarize_responses(a.raw_responses, def->levels);
        if (std::abs(expect.mean_score - a.mean_score) > kAnnotationTol) {
          out.push_back({id, "mean mismatch",
                         name + ": mean_score " + fmt_double(a.mean_score) + " but responses give " +
                             fmt_double(expect.mean_score)});
        }
        if (std::abs(expect.std_score - a.std_score) > kAnnotationTol) {
          out.push_back({id, "std mismatch",
                         name + ": std_score " + fmt_double(a.std_score) + " but responses give " +
                             fmt_double(expect.std_score)});
        }
      }
    }

    for (const auto& [name, score] : rec.classifier_scores) {
      if (!in_unit(score)) out.push_back({id, "classifier score range", name + ": " + fmt_double(score)});
    }
  }
  return out;
}

}  // namespace latent_audit
