#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunekit/analysis.hpp"
#include "prunekit/baselines.hpp"
#include "prunekit/core.hpp"
#include "prunekit/surrogate.hpp"

namespace prunekit {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct JsonLine {
  std::size_t line{};  // 1-based
  json value;
};

// Non-blank lines of a JSONL file. Malformed lines throw ParseError naming the
// line, or are appended to `skipped` when it is non-null.
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path, std::vector<std::string>* skipped = nullptr);
std::string to_jsonl(const std::vector<json>& rows);

// Non-finite doubles are not representable in JSON; they travel as the
// strings "-inf", "inf" and "nan".
json encode_double(double v);
double decode_double(const json& v);

json instance_to_json(const Instance& inst);
Instance instance_from_json(const json& j);  // ValidationError on missing or mistyped fields

json trace_to_json(const PruneTrace& trace);
PruneTrace trace_from_json(const json& j);

json annotation_to_json(const AnnotationSet& ann);
AnnotationSet annotation_from_json(const json& j);

ScoreRecord score_record_from_json(const json& j);

std::vector<Instance> read_instances(const std::filesystem::path& path);
std::vector<PruneTrace> read_traces(const std::filesystem::path& path);
std::map<std::string, AnnotationSet> read_annotations(const std::filesystem::path& path);
std::map<std::string, ScoreRecord> read_score_records(const std::filesystem::path& path);

void write_instances(const std::filesystem::path& path, const std::vector<Instance>& instances);
void write_traces(const std::filesystem::path& path, const std::vector<PruneTrace>& traces);

// Fixed-precision decimal used in every CSV cell ("%.17g").
std::string format_double(double v);

std::string retention_csv(const std::vector<RetentionRow>& rows);
std::string dynamics_csv(const std::vector<DynamicsRow>& rows);
std::string frequency_csv(const std::vector<CategoryShare>& rows);

// Header "id,index,l0h0,...,target"; one row per reasoning token.
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;
  FeatureMatrix features;
  std::vector<double> targets;
};

std::string feature_csv(const FeatureTable& table, std::size_t heads);
FeatureTable parse_feature_csv(const std::string& text);

json surrogate_to_json(const SurrogateModel& model);
SurrogateModel surrogate_from_json(const json& j);

}  // namespace prunekit
