#include "latent_audit/dataset_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace latent_audit {

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_real(const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  // ERANGE on underflow still yields the nearest subnormal, which is what was written.
  if (end == text.c_str() || *end != '\0' || (errno == ERANGE && std::isinf(v))) {
    throw Error(ErrorCode::Parse, "not a real number: '" + text + "'");
  }
  return v;
}

namespace {

std::string kind_name(AttributeKind kind) {
  return kind == AttributeKind::binary ? "binary" : "continuous";
}

AttributeKind kind_from(const std::string& s) {
  if (s == "binary") return AttributeKind::binary;
  if (s == "continuous") return AttributeKind::continuous;
  throw Error(ErrorCode::Parse, "unknown attribute kind '" + s + "'");
}

template <typename T>
T require(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json schema_to_json(const AttributeSchema& schema) {
  json attrs = json::array();
  for (const auto& a : schema.attributes) {
    json o;
    o["name"] = a.name;
    o["kind"] = kind_name(a.kind);
    o["levels"] = a.levels;
    o["neutral"] = a.neutral;
    o["step_range"] = {a.step_range.min_decision, a.step_range.max_decision};
    o["bins"] = a.bins;
    if (!a.bin_labels.empty()) o["bin_labels"] = a.bin_labels;
    attrs.push_back(std::move(o));
  }
  return json{{"attributes", std::move(attrs)}};
}

AttributeSchema schema_from_json(const json& j) {
  AttributeSchema schema;
  for (const auto& o : require<json>(j, "attributes")) {
    AttributeDef a;
    a.name = require<std::string>(o, "name");
    a.kind = kind_from(o.value("kind", std::string("continuous")));
    a.levels = o.value("levels", a.kind == AttributeKind::binary ? 2 : 5);
    a.neutral = o.value("neutral", 0.5);
    if (o.contains("step_range")) {
      const auto range = o.at("step_range").get<std::vector<double>>();
      if (range.size() != 2) throw Error(ErrorCode::Parse, a.name + ": step_range needs two values");
      a.step_range = {range[0], range[1]};
    }
    if (o.contains("bins")) a.bins = o.at("bins").get<std::vector<double>>();
    if (o.contains("bin_labels")) a.bin_labels = o.at("bin_labels").get<std::vector<std::string>>();
    schema.attributes.push_back(std::move(a));
  }
  return schema;
}

json header_to_json(const DatasetHeader& header) {
  return json{{"space", header.space}, {"dim", header.dim}, {"schema", schema_to_json(header.schema)}};
}

DatasetHeader header_from_json(const json& j) {
  DatasetHeader h;
  h.space = require<std::string>(j, "space");
  h.dim = require<int>(j, "dim");
  h.schema = schema_from_json(require<json>(j, "schema"));
  return h;
}

json record_to_json(const DatasetRecord& record) {
  json o;
  o["id"] = record.image_id;
  if (record.latent) {
    json values = json::array();
    for (Eigen::Index i = 0; i < record.latent->values.size(); ++i) {
      values.push_back(format_real(record.latent->values[i]));
    }
    o["latent"] = std::move(values);
  }
  if (record.transect) {
    const auto& t = *record.transect;
    o["transect"] = {{"id", t.transect_id}, {"axes", t.axes}, {"index", t.grid_index}, {"intended", t.intended}};
  }
  if (record.annotations) {
    json attrs = json::object();
    for (const auto& [name, a] : record.annotations->attributes) {
      attrs[name] = {{"raw", a.raw_responses}, {"mean", a.mean_score}, {"std", a.std_score}};
    }
    o["annotations"] = {{"fakeness", record.annotations->fakeness}, {"attributes", std::move(attrs)}};
  }
  if (!record.classifier_scores.empty()) o["scores"] = record.classifier_scores;
  return o;
}

DatasetRecord record_from_json(const json& j, const DatasetHeader& header) {
  DatasetRecord r;
  r.image_id = require<std::string>(j, "id");
  if (j.contains("latent")) {
    const auto& arr = j.at("latent");
    LatentPoint p;
    p.space = header.space;
    p.values.resize(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& v = arr[i];
      p.values[static_cast<Eigen::Index>(i)] = v.is_string() ? parse_real(v.get<std::string>()) : v.get<double>();
    }
    r.latent = std::move(p);
  }
  if (j.contains("transect")) {
    const auto& t = j.at("transect");
    TransectCoords c;
    c.transect_id = require<std::int64_t>(t, "id");
    c.axes = require<std::vector<std::string>>(t, "axes");
    c.grid_index = require<std::vector<int>>(t, "index");
    c.intended = require<std::vector<double>>(t, "intended");
    r.transect = std::move(c);
  }
  if (j.contains("annotations")) {
    const auto& a = j.at("annotations");
    AnnotationRecord rec;
    rec.fakeness = a.value("fakeness", 0.0);
    if (a.contains("attributes")) {
      for (const auto& [name, v] : a.at("attributes").items()) {
        AttributeAnnotation ann;
        ann.raw_responses = v.value("raw", std::vector<int>{});
        ann.mean_score = require<double>(v, "mean");
        ann.std_score = v.value("std", 0.0);
        rec.attributes.emplace(name, std::move(ann));
      }
    }
    r.annotations = std::move(rec);
  }
  if (j.contains("scores")) r.classifier_scores = j.at("scores").get<std::map<std::string, double>>();
  return r;
}

void write_dataset(std::ostream& out, const AuditDataset& dataset) {
  out << header_to_json(dataset.header).dump() << '\n';
  for (const auto& r : dataset.records) out << record_to_json(r).dump() << '\n';
}

AuditDataset read_dataset(std::istream& in) {
  AuditDataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      ds.header = header_from_json(j);
      have_header = true;
    } else {
      ds.records.push_back(record_from_json(j, ds.header));
    }
  }
  if (!have_header) throw Error(ErrorCode::Parse, "dataset has no header line");
  return ds;
}

void save_dataset(const std::filesystem::path& path, const AuditDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Parse, "cannot write " + path.string());
  write_dataset(out, dataset);
}

AuditDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Parse, "cannot read " + path.string());
  return read_dataset(in);
}

void append_records(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Parse, "cannot append to " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

AttributeSchema load_schema(const std::filesystem::path& path) {
  return schema_from_json(load_json_file(path));
}

void save_schema(const std::filesystem::path& path, const AttributeSchema& schema) {
  save_json_file(path, schema_to_json(schema));
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Parse, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void save_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Parse, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace latent_audit
