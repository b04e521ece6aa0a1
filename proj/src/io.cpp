#include "prunekit/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "prunekit/error.hpp"

namespace prunekit {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::kIoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::vector<JsonLine> read_jsonl(const fs::path& path, std::vector<std::string>* skipped) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  std::vector<JsonLine> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back({no, json::parse(line)});
    } catch (const json::parse_error& e) {
      std::string msg = path.string() + ":" + std::to_string(no) + ": malformed JSON (" + e.what() + ")";
      if (skipped == nullptr) throw Error(Errc::kParseError, msg);
      skipped->push_back(std::move(msg));
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json encode_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_double(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error(Errc::kValidationError, "expected a number, got " + v.dump());
}

namespace {

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw Error(Errc::kValidationError, "expected a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw Error(Errc::kValidationError, std::string("missing field \"") + name + "\"");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw Error(Errc::kValidationError, std::string("field \"") + name + "\" must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_array(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array()) throw Error(Errc::kValidationError, std::string("field \"") + name + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw Error(Errc::kValidationError, std::string("field \"") + name + "\" must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::size_t count_of(const json& v, const char* what) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(Errc::kValidationError, std::string(what) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

json units_json(const Units& units) {
  json arr = json::array();
  for (const auto& u : units) arr.push_back(u.text);
  return arr;
}

template <typename T, typename F>
std::vector<T> read_all(const fs::path& path, F&& parse) {
  std::vector<T> out;
  for (auto& row : read_jsonl(path)) {
    try {
      out.push_back(parse(row.value));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(row.line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

json instance_to_json(const Instance& inst) {
  json j;
  j["id"] = inst.id;
  j["question"] = units_json(inst.question);
  j["reasoning"] = units_json(inst.reasoning);
  j["answer"] = units_json(inst.answer);
  j["meta"] = inst.meta;
  return j;
}

Instance instance_from_json(const json& j) {
  Instance inst;
  inst.id = string_field(j, "id");
  inst.question = make_units(string_array(j, "question"));
  inst.reasoning = make_units(string_array(j, "reasoning"));
  inst.answer = make_units(string_array(j, "answer"));
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(Errc::kValidationError, "field \"meta\" must be an object");
    for (const auto& [k, v] : it->items()) inst.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return validate_instance(inst);
}

json trace_to_json(const PruneTrace& trace) {
  json j;
  j["id"] = trace.instance_id;
  j["objective"] = std::string(objective_name(trace.objective));
  j["n"] = trace.n;
  j["rho_min"] = trace.rho_min.str();
  json ranks = json::array();
  for (const auto& r : trace.ranks) ranks.push_back(r ? json(*r) : json(nullptr));
  j["ranks"] = std::move(ranks);
  if (trace.steps) {
    json steps = json::array();
    for (const auto& rec : *trace.steps) {
      json scores = json::object();
      for (const auto& [idx, s] : rec.candidate_scores) scores[std::to_string(idx)] = encode_double(s);
      steps.push_back({{"step", rec.step}, {"candidate_scores", std::move(scores)}, {"removed", rec.removed}});
    }
    j["steps"] = std::move(steps);
  }
  if (trace.resume_at_step) j["resume_at_step"] = *trace.resume_at_step;
  return j;
}

PruneTrace trace_from_json(const json& j) {
  PruneTrace tr;
  tr.instance_id = string_field(j, "id");
  tr.objective = parse_objective(string_field(j, "objective"));
  tr.n = count_of(field(j, "n"), "n");
  tr.rho_min = KeepFraction::parse(string_field(j, "rho_min"));
  const json& ranks = field(j, "ranks");
  if (!ranks.is_array() || ranks.size() != tr.n) {
    throw Error(Errc::kValidationError, "ranks must be an array of length n");
  }
  for (const auto& r : ranks) {
    if (r.is_null()) {
      tr.ranks.emplace_back();
    } else {
      const std::size_t v = count_of(r, "rank");
      if (v == 0) throw Error(Errc::kValidationError, "ranks are 1-based");
      tr.ranks.emplace_back(v);
    }
  }
  if (auto it = j.find("steps"); it != j.end() && !it->is_null()) {
    std::vector<StepRecord> steps;
    for (const auto& s : *it) {
      StepRecord rec;
      rec.step = count_of(field(s, "step"), "step");
      for (const auto& [k, v] : field(s, "candidate_scores").items()) {
        rec.candidate_scores[std::stoul(k)] = decode_double(v);
      }
      for (const auto& r : field(s, "removed")) rec.removed.push_back(count_of(r, "removed index"));
      steps.push_back(std::move(rec));
    }
    tr.steps = std::move(steps);
  }
  if (auto it = j.find("resume_at_step"); it != j.end() && !it->is_null()) {
    tr.resume_at_step = count_of(*it, "resume_at_step");
  }
  return tr;
}

json annotation_to_json(const AnnotationSet& ann) {
  json cats = json::array();
  for (Category c : ann.categories) cats.push_back(std::string(category_name(c)));
  return {{"id", ann.instance_id}, {"categories", std::move(cats)}};
}

AnnotationSet annotation_from_json(const json& j) {
  AnnotationSet ann;
  ann.instance_id = string_field(j, "id");
  for (const auto& c : string_array(j, "categories")) ann.categories.push_back(parse_category(c));
  return ann;
}

ScoreRecord score_record_from_json(const json& j) {
  ScoreRecord rec;
  rec.id = string_field(j, "id");
  const json& scores = field(j, "scores");
  if (!scores.is_array()) throw Error(Errc::kValidationError, "field \"scores\" must be an array");
  for (const auto& s : scores) {
    if (s.is_null()) {
      rec.scores.emplace_back();
    } else {
      rec.scores.emplace_back(decode_double(s));
    }
  }
  return rec;
}

std::vector<Instance> read_instances(const fs::path& path) {
  auto out = read_all<Instance>(path, instance_from_json);
  validate_dataset(out);
  return out;
}

std::vector<PruneTrace> read_traces(const fs::path& path) { return read_all<PruneTrace>(path, trace_from_json); }

std::map<std::string, AnnotationSet> read_annotations(const fs::path& path) {
  std::map<std::string, AnnotationSet> out;
  for (auto& a : read_all<AnnotationSet>(path, annotation_from_json)) {
    const std::string id = a.instance_id;
    if (!out.emplace(id, std::move(a)).second) throw Error(Errc::kDuplicateId, "duplicate annotation id '" + id + "'");
  }
  return out;
}

std::map<std::string, ScoreRecord> read_score_records(const fs::path& path) {
  std::map<std::string, ScoreRecord> out;
  for (auto& r : read_all<ScoreRecord>(path, score_record_from_json)) {
    const std::string id = r.id;
    if (!out.emplace(id, std::move(r)).second) throw Error(Errc::kDuplicateId, "duplicate score id '" + id + "'");
  }
  return out;
}

void write_instances(const fs::path& path, const std::vector<Instance>& instances) {
  std::vector<json> rows;
  for (const auto& i : instances) rows.push_back(instance_to_json(i));
  write_file_atomic(path, to_jsonl(rows));
}

void write_traces(const fs::path& path, const std::vector<PruneTrace>& traces) {
  std::vector<json> rows;
  for (const auto& t : traces) rows.push_back(trace_to_json(t));
  write_file_atomic(path, to_jsonl(rows));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string retention_csv(const std::vector<RetentionRow>& rows) {
  std::string out = "rho,category,retention,count\n";
  for (const auto& r : rows) {
    out += r.rho.str() + "," + std::string(category_name(r.category)) + "," + format_double(r.retention) + "," +
           std::to_string(r.count) + "\n";
  }
  return out;
}

std::string dynamics_csv(const std::vector<DynamicsRow>& rows) {
  std::string out = "rho_curr,mode,hit\n";
  for (const auto& r : rows) {
    out += r.rho_curr.str() + "," + std::string(hit_mode_name(r.mode)) + "," + format_double(r.hit) + "\n";
  }
  return out;
}

std::string frequency_csv(const std::vector<CategoryShare>& rows) {
  std::string out = "category,fraction,count\n";
  for (const auto& r : rows) {
    out += std::string(category_name(r.category)) + "," + format_double(r.fraction) + "," + std::to_string(r.count) +
           "\n";
  }
  return out;
}

std::string feature_csv(const FeatureTable& table, std::size_t heads) {
  if (heads == 0) throw Error(Errc::kValidationError, "head count must be positive");
  const auto& fm = table.features;
  std::string out = "id,index";
  for (std::size_t c = 0; c < fm.cols; ++c) out += ",l" + std::to_string(c / heads) + "h" + std::to_string(c % heads);
  out += ",target\n";
  for (std::size_t r = 0; r < fm.rows; ++r) {
    out += table.ids[r] + "," + std::to_string(table.indices[r]);
    for (double v : fm.row(r)) out += "," + format_double(v);
    out += "," + (r < table.targets.size() ? format_double(table.targets[r]) : std::string()) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kParseError, "line " + std::to_string(line) + ": bad number '" + cell + "'");
}

}  // namespace

FeatureTable parse_feature_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kParseError, "empty feature file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "index" || header.back() != "target") {
    throw Error(Errc::kParseError, "feature header must be id,index,<features...>,target");
  }
  FeatureTable t;
  t.features.cols = header.size() - 3;
  std::size_t no = 1;
  bool any_target = false, missing_target = false;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(Errc::kParseError, "line " + std::to_string(no) + ": expected " + std::to_string(header.size()) +
                                         " cells, got " + std::to_string(cells.size()));
    }
    t.ids.push_back(cells[0]);
    t.indices.push_back(static_cast<std::size_t>(parse_cell(cells[1], no)));
    for (std::size_t c = 2; c + 1 < cells.size(); ++c) t.features.values.push_back(parse_cell(cells[c], no));
    ++t.features.rows;
    if (cells.back().empty()) {
      missing_target = true;
    } else {
      any_target = true;
      t.targets.push_back(parse_cell(cells.back(), no));
    }
  }
  if (any_target && missing_target) throw Error(Errc::kParseError, "some rows lack a target");
  return t;
}

json surrogate_to_json(const SurrogateModel& model) {
  return {{"inputs", model.inputs()},
          {"hidden", model.hidden()},
          {"layout", "in_mean[D],in_scale[D],W1[hidden*D],b1[hidden],w2[hidden],b2"},
          {"weights", model.flat()}};
}

SurrogateModel surrogate_from_json(const json& j) {
  return SurrogateModel::from_flat(count_of(field(j, "inputs"), "inputs"), count_of(field(j, "hidden"), "hidden"),
                                   field(j, "weights").get<std::vector<double>>());
}

}  // namespace prunekit
