#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latent_audit/error.hpp"

namespace latent_audit {

enum class AttributeKind { continuous, binary };

struct StepRange {
  double min_decision = -1.0;
  double max_decision = 1.0;
};

/// One annotated attribute. All downstream code works on the normalized
/// [0, 1] scale, i.e. raw_level / (levels - 1).
struct AttributeDef {
  std::string name;
  AttributeKind kind = AttributeKind::continuous;
  int levels = 5;
  double neutral = 0.5;
  StepRange step_range;
  /// Full bin edges, first 0 and last 1. Bins are [lo, hi) except the last,
  /// which is closed.
  std::vector<double> bins{0.0, 0.5, 1.0};
  /// Optional names for the bins; defaults to "b0", "b1", ...
  std::vector<std::string> bin_labels;

  std::size_t bin_count() const { return bins.size() - 1; }
  std::string bin_label(std::size_t bin) const;
  /// Index of the bin containing a normalized score.
  std::size_t bin_of(double score) const;
};

struct AttributeSchema {
  std::vector<AttributeDef> attributes;

  std::size_t size() const { return attributes.size(); }
  const AttributeDef* find(const std::string& name) const;
  const AttributeDef& at(const std::string& name) const;
  std::optional<std::size_t> index_of(const std::string& name) const;
};

/// Schema rule violations; empty means the schema is usable.
std::vector<std::string> check_schema(const AttributeSchema& schema);

struct LatentPoint {
  std::string space;
  Eigen::VectorXd values;

  Eigen::Index dim() const { return values.size(); }
};

struct AttributeAnnotation {
  std::vector<int> raw_responses;
  double mean_score = 0.0;
  double std_score = 0.0;
};

/// Normalizes raw responses to [0,1] and computes mean and population std.
AttributeAnnotation summarize_responses(std::vector<int> raw, int levels);

struct AnnotationRecord {
  std::map<std::string, AttributeAnnotation> attributes;
  double fakeness = 0.0;

  const AttributeAnnotation* find(const std::string& name) const;
};

struct TransectCoords {
  std::int64_t transect_id = 0;
  std::vector<std::string> axes;
  std::vector<int> grid_index;
  std::vector<double> intended;
};

struct DatasetRecord {
  std::string image_id;
  std::optional<LatentPoint> latent;
  std::optional<TransectCoords> transect;
  std::optional<AnnotationRecord> annotations;
  std::map<std::string, double> classifier_scores;
};

struct DatasetHeader {
  std::string space;
  int dim = 0;
  AttributeSchema schema;
};

struct AuditDataset {
  DatasetHeader header;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct Violation {
  std::string record_id;
  std::string rule;
  std::string detail;
};

/// Checks every dataset invariant. Never throws on parseable input; each
/// problem is reported as a violation instead.
std::vector<Violation> validate_dataset(const AuditDataset& dataset);

}  // namespace latent_audit
