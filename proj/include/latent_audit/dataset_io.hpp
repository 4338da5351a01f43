#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "latent_audit/core.hpp"

namespace latent_audit {

using json = nlohmann::json;

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double value);
double parse_real(const std::string& text);

json schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(const json& j);

json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const json& j, const DatasetHeader& header);

json header_to_json(const DatasetHeader& header);
DatasetHeader header_from_json(const json& j);

/// JSONL: header object on line 1, one record per following line.
void write_dataset(std::ostream& out, const AuditDataset& dataset);
AuditDataset read_dataset(std::istream& in);

void save_dataset(const std::filesystem::path& path, const AuditDataset& dataset);
AuditDataset load_dataset(const std::filesystem::path& path);
/// Appends records to an existing file without rewriting it.
void append_records(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

AttributeSchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const AttributeSchema& schema);

json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const json& j);

}  // namespace latent_audit
