#include "prunekit/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <mutex>

#include "prunekit/baselines.hpp"
#include "prunekit/config.hpp"
#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/io.hpp"
#include "prunekit/ngram.hpp"
#include "prunekit/parallel.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/scoring.hpp"
#include "prunekit/toy_transformer.hpp"

namespace prunekit {

namespace fs = std::filesystem;
using nlohmann::json;

IngestResult ingest(const fs::path& path, bool lenient) {
  if (!fs::exists(path)) throw Error(Errc::kIoError, "no such file: " + path.string());
  IngestResult out;
  std::map<std::string, std::size_t, std::less<>> seen;
  for (auto& row : read_jsonl(path, lenient ? &out.skipped : nullptr)) {
    Instance inst;
    try {
      inst = instance_from_json(row.value);
    } catch (const Error& e) {
      std::string msg = path.string() + ":" + std::to_string(row.line) + ": " + e.what();
      if (!lenient) throw Error(Errc::kValidationError, msg);
      out.skipped.push_back(std::move(msg));
      continue;
    }
    auto [it, fresh] = seen.emplace(inst.id, row.line);
    if (!fresh) {
      throw Error(Errc::kDuplicateId, path.string() + ":" + std::to_string(row.line) + ": id '" + inst.id +
                                          "' already used on line " + std::to_string(it->second));
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_params(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view item = text.substr(start, comma - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::kConfigError, "backend parameter '" + std::string(item) + "' needs key=value");
    out[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    start = comma + 1;
  }
  return out;
}

double number_param(const std::map<std::string, std::string>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kConfigError, "backend parameter " + key + " is not a number");
}

std::vector<std::string> sequence_of(const Instance& inst) {
  std::vector<std::string> seq;
  for (const Units* part : {&inst.question, &inst.reasoning, &inst.answer}) {
    for (const auto& u : *part) seq.push_back(u.text);
  }
  return seq;
}

}  // namespace

std::unique_ptr<LikelihoodBackend> make_backend(std::string_view spec, std::span<const Instance> dataset,
                                                const RemoteConfig& remote) {
  const std::size_t colon = spec.find(':');
  const std::string kind(spec.substr(0, colon));
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (kind == "remote") {
    RemoteConfig cfg = remote;
    if (!rest.empty()) cfg.score_url = std::string(rest);
    if (cfg.score_url.empty()) throw Error(Errc::kConfigError, "remote backend needs a score URL");
    return std::make_unique<RemoteBackend>(std::move(cfg));
  }
  const auto params = parse_params(rest);
  for (const auto& [k, v] : params) {
    const bool known = kind == "toy" ? k == "seed" : (k == "order" || k == "alpha" || k == "corpus");
    if (!known) throw Error(Errc::kConfigError, "unknown " + kind + " backend parameter '" + k + "'");
  }
  if (kind == "toy") {
    return std::make_unique<ToyTransformer>(static_cast<std::uint64_t>(number_param(params, "seed", 0)));
  }
  if (kind == "ngram") {
    std::vector<std::vector<std::string>> corpus;
    if (auto it = params.find("corpus"); it != params.end()) {
      for (const auto& inst : read_instances(it->second)) corpus.push_back(sequence_of(inst));
    } else {
      for (const auto& inst : dataset) corpus.push_back(sequence_of(inst));
    }
    const double order = number_param(params, "order", 2);
    if (order != static_cast<int>(order)) throw Error(Errc::kInvalidOrder, "n-gram order must be an integer");
    auto model = NgramModel::fit(corpus, static_cast<int>(order), number_param(params, "alpha", 0.1));
    return std::make_unique<NgramModel>(std::move(model));
  }
  throw Error(Errc::kConfigError, "unknown backend kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool answers_match(std::string_view a, std::string_view b) { return normalize_answer(a) == normalize_answer(b); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_by_offsets(std::string_view text,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& offsets) {
  std::vector<std::string> out;
  std::size_t prev_start = 0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const std::size_t start = i == 0 ? 0 : offsets[i].first;
    const std::size_t end = i + 1 < offsets.size() ? offsets[i + 1].first : text.size();
    if (offsets[i].first > text.size() || offsets[i].second > text.size() || offsets[i].first > offsets[i].second ||
        (i > 0 && offsets[i].first < prev_start)) {
      throw Error(Errc::kValidationError, "offset " + std::to_string(i) + " is out of order or out of range");
    }
    prev_start = offsets[i].first;
    if (end > start) out.emplace_back(text.substr(start, end - start));
  }
  if (offsets.empty() && !text.empty()) out.emplace_back(text);
  return out;
}

std::vector<Question> read_questions(const fs::path& path) {
  std::vector<Question> out;
  for (auto& row : read_jsonl(path)) {
    const json& j = row.value;
    const std::string where = path.string() + ":" + std::to_string(row.line) + ": ";
    if (!j.is_object() || !j.contains("id") || !j.contains("question") || !j.contains("answer")) {
      throw Error(Errc::kValidationError, where + "question rows need id, question and answer");
    }
    Question q;
    q.id = j["id"].get<std::string>();
    const json& text = j["question"];
    if (text.is_string()) {
      q.question = split_words(text.get<std::string>());
    } else {
      q.question = text.get<std::vector<std::string>>();
    }
    const json& gold = j["answer"];
    q.gold = gold.is_string() ? gold.get<std::string>() : detokenize(make_units(gold.get<std::vector<std::string>>()));
    if (q.question.empty()) throw Error(Errc::kValidationError, where + "empty question");
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> offsets_of(const json& j) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& o : j) out.emplace_back(o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>());
  return out;
}

}  // namespace

std::vector<Instance> generate(const RemoteClient& client, std::span<const Question> questions,
                               const SamplingSpec& spec) {
  if (spec.samples_per_question == 0) throw Error(Errc::kConfigError, "samples_per_question must be at least 1");
  std::vector<Instance> out;
  for (const auto& q : questions) {
    std::string prompt;
    for (const auto& u : q.question) prompt += u;
    const json reply = client.generate({{"id", q.id},
                                        {"prompt", prompt},
                                        {"temperature", spec.temperature},
                                        {"top_p", spec.top_p},
                                        {"n", spec.samples_per_question}});
    std::vector<Instance> correct;
    try {
      for (const auto& s : reply.at("samples")) {
        const std::string answer = s.at("answer").get<std::string>();
        if (!spec.checker(answer, q.gold)) continue;
        Instance inst;
        inst.id = q.id;
        inst.question = make_units(q.question);
        inst.reasoning = make_units(split_by_offsets(s.at("reasoning").get<std::string>(), offsets_of(s.at("reasoning_offsets"))));
        inst.answer = make_units(split_by_offsets(answer, offsets_of(s.at("answer_offsets"))));
        if (inst.reasoning.empty() || inst.answer.empty()) continue;
        correct.push_back(std::move(inst));
      }
    } catch (const json::exception& e) {
      throw Error(Errc::kBackendFailure, "malformed generation reply for '" + q.id + "': " + e.what());
    }
    if (correct.empty()) continue;
    SplitMix64 rng(derive_seed(spec.seed, q.id));
    out.push_back(std::move(correct[rng.below(correct.size())]));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const json* find_path(const json& j, std::initializer_list<const char*> keys) {
  const json* cur = &j;
  for (const char* k : keys) {
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(k);
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

KeepFraction grid_entry(const json& v) {
  if (v.is_string()) return KeepFraction::parse(v.get<std::string>());
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v.get<double>());
    return KeepFraction::parse(buf);
  }
  throw Error(Errc::kConfigError, "grid entries must be numbers or strings");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

SweepConfig sweep_config_from_json(const json& j, const fs::path& base_dir) {
  SweepConfig cfg;
  try {
    const json* dataset = find_path(j, {"dataset"});
    if (dataset == nullptr) throw Error(Errc::kConfigError, "config needs a dataset path");
    cfg.dataset = resolve(base_dir, dataset->get<std::string>());
    if (auto* v = find_path(j, {"backend"})) cfg.backend = v->get<std::string>();
    if (auto* v = find_path(j, {"objectives"})) {
      cfg.objectives.clear();
      for (const auto& o : *v) cfg.objectives.push_back(parse_objective(o.get<std::string>()));
    }
    if (auto* v = find_path(j, {"methods"})) cfg.methods = v->get<std::vector<std::string>>();
    if (auto* v = find_path(j, {"grid"})) {
      cfg.grid.clear();
      if (v->is_string()) {
        cfg.grid = parse_grid(v->get<std::string>());
      } else {
        for (const auto& g : *v) cfg.grid.push_back(grid_entry(g));
      }
    }
    if (auto* v = find_path(j, {"seeds"})) cfg.seeds = v->get<std::vector<std::uint64_t>>();
    if (auto* v = find_path(j, {"out"})) cfg.out = resolve(base_dir, v->get<std::string>());
    if (auto* v = find_path(j, {"parallelism"})) cfg.parallelism = v->get<std::size_t>();
    if (auto* v = find_path(j, {"k_per_step"})) cfg.k_per_step = v->get<std::size_t>();
    if (auto* v = find_path(j, {"record_steps"})) cfg.record_steps = v->get<bool>();
    if (auto* v = find_path(j, {"external_scores"})) cfg.external_scores = resolve(base_dir, v->get<std::string>());
    if (auto* v = find_path(j, {"remote", "score_url"})) cfg.remote.score_url = v->get<std::string>();
    if (auto* v = find_path(j, {"remote", "generate_url"})) cfg.remote.generate_url = v->get<std::string>();
    if (auto* v = find_path(j, {"remote", "token_env"})) cfg.remote.token_env = v->get<std::string>();
    if (auto* v = find_path(j, {"remote", "timeout_seconds"})) cfg.remote.timeout_seconds = v->get<double>();
    if (auto* v = find_path(j, {"remote", "retries"})) cfg.remote.retries = v->get<int>();
    if (auto* v = find_path(j, {"remote", "max_in_flight"})) cfg.remote.max_in_flight = v->get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigError, std::string("config value has the wrong type: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kConfigError) throw;
    throw Error(Errc::kConfigError, e.what());
  }

  static const std::vector<std::string> known{"external", "greedy", "h2o", "surprisal", "uniform"};
  if (cfg.methods.empty()) throw Error(Errc::kConfigError, "method set is empty");
  for (const auto& m : cfg.methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw Error(Errc::kConfigError, "unknown method '" + m + "'");
    }
  }
  std::sort(cfg.methods.begin(), cfg.methods.end());
  cfg.methods.erase(std::unique(cfg.methods.begin(), cfg.methods.end()), cfg.methods.end());
  if (std::find(cfg.methods.begin(), cfg.methods.end(), "external") != cfg.methods.end() && !cfg.external_scores) {
    throw Error(Errc::kConfigError, "method 'external' needs external_scores");
  }
  if (cfg.objectives.empty()) throw Error(Errc::kConfigError, "objective set is empty");
  if (cfg.grid.empty()) throw Error(Errc::kConfigError, "rho grid is empty");
  std::sort(cfg.grid.begin(), cfg.grid.end());
  cfg.grid.erase(std::unique(cfg.grid.begin(), cfg.grid.end()), cfg.grid.end());
  if (cfg.seeds.empty()) throw Error(Errc::kConfigError, "seed list is empty");
  if (cfg.k_per_step == 0) throw Error(Errc::kConfigError, "k_per_step must be at least 1");
  cfg.parallelism = std::max<std::size_t>(1, cfg.parallelism);
  return cfg;
}

SweepConfig load_sweep_config(const fs::path& path) {
  json j;
  try {
    j = load_toml(path);
  } catch (const Error& e) {
    throw Error(Errc::kConfigError, e.what());
  }
  return sweep_config_from_json(j, path.parent_path());
}

namespace {

std::string file_stem_for(const std::string& id) {
  std::string out;
  bool changed = false;
  for (char c : id) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      out += c;
    } else {
      out += '_';
      changed = true;
    }
  }
  if (out.empty() || out[0] == '.') changed = true;
  if (changed) out += "-" + sha256_hex(id).substr(0, 8);
  return out;
}

std::string rho_dir(const KeepFraction& rho) {
  std::string s = rho.str();
  std::replace(s.begin(), s.end(), '/', '_');
  return "rho-" + s;
}

// One unit of work: all rho cells for (instance, method, objective, seed).
struct Job {
  std::size_t instance;
  std::string method;
  Objective objective;
  std::optional<std::uint64_t> seed;
};

struct Artifact {
  std::string path;  // relative to the output directory
  json meta;         // instance, method, objective, rho, seed, status
  std::string content;
  std::string error;
};

}  // namespace

SweepResult sweep(const SweepConfig& cfg, const LikelihoodBackend* backend) {
  std::vector<Instance> dataset = ingest(cfg.dataset).instances;
  std::unique_ptr<LikelihoodBackend> owned;
  if (backend == nullptr) {
    owned = make_backend(cfg.backend, dataset, cfg.remote);
    backend = owned.get();
  }
  std::map<std::string, ScoreRecord> external;
  if (cfg.external_scores) external = read_score_records(*cfg.external_scores);

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (const auto& method : cfg.methods) {
      for (Objective obj : cfg.objectives) {
        if (method == "uniform") {
          for (auto seed : cfg.seeds) jobs.push_back({i, method, obj, seed});
        } else {
          jobs.push_back({i, method, obj, std::nullopt});
        }
      }
    }
  }

  const KeepFraction rho_min = cfg.grid.front();
  ScoreCache cache;
  const std::size_t workers = backend->descriptor().concurrency_safe ? cfg.parallelism : 1;
  std::vector<std::vector<Artifact>> results(jobs.size());

  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const Instance& inst = dataset[job.instance];
    const std::string obj_name(objective_name(job.objective));
    std::string method_dir = job.method;
    if (job.seed) method_dir += "/seed-" + std::to_string(*job.seed);

    auto cell_meta = [&](const KeepFraction& rho) {
      json m = {{"instance", inst.id}, {"method", job.method}, {"objective", obj_name}, {"rho", rho.str()}};
      if (job.seed) m["seed"] = *job.seed;
      return m;
    };
    auto& out = results[j];
    try {
      std::function<KeepSet(const KeepFraction&)> keep_at;
      std::optional<PruneTrace> trace;
      RankVector ranks;
      if (job.method == "greedy") {
        GreedyConfig gc;
        gc.objective = job.objective;
        gc.rho_min = rho_min;
        gc.k_per_step = cfg.k_per_step;
        gc.record_steps = cfg.record_steps;
        gc.parallelism = 1;
        gc.cache = &cache;
        trace = greedy_prune(*backend, inst, gc);
        keep_at = [&](const KeepFraction& rho) { return keep_set_at(*trace, rho); };
      } else {
        if (job.method == "uniform") {
          ranks = uniform_ranks(inst.n(), derive_seed(*job.seed, inst.id));
        } else if (job.method == "surprisal") {
          ranks = surprisal_ranks(token_surprisals(*backend, inst.question, inst.reasoning, inst.answer));
        } else if (job.method == "h2o") {
          std::vector<std::string_view> seq;
          for (const Units* part : {&inst.question, &inst.reasoning, &inst.answer}) {
            for (const auto& u : *part) seq.push_back(u.text);
          }
          const std::size_t q = inst.question.size();
          ranks = h2o_ranks(backend->attention(seq), Span{q, q + inst.n()});
        } else {
          ranks = external_ranks(external, inst);
        }
        ranks.instance_id = inst.id;
        keep_at = [&](const KeepFraction& rho) { return prune_by_ranks(ranks, rho); };
      }

      if (trace) {
        out.push_back({"traces/" + obj_name + "/" + file_stem_for(inst.id) + ".json",
                       {{"instance", inst.id}, {"method", "greedy"}, {"objective", obj_name}, {"kind", "trace"}},
                       trace_to_json(*trace).dump() + "\n",
                       {}});
      }
      for (const KeepFraction& rho : cfg.grid) {
        Artifact a;
        a.path = "keepsets/" + method_dir + "/" + obj_name + "/" + rho_dir(rho) + "/" + file_stem_for(inst.id) + ".json";
        a.meta = cell_meta(rho);
        a.meta["kind"] = "keepset";
        try {
          const KeepSet keep = keep_at(rho);
          const double score =
              cached_score(&cache, *backend, job.objective, inst.question, apply_keep(inst.reasoning, keep), inst.answer)
                  .total;
          json body = cell_meta(rho);
          body["n"] = inst.n();
          body["m"] = keep.size();
          body["kept"] = keep.kept;
          body["score"] = encode_double(score);
          a.content = body.dump() + "\n";
          a.meta["m"] = keep.size();
        } catch (const Error& e) {
          a.error = std::string(e.what());
        }
        out.push_back(std::move(a));
      }
    } catch (const Error& e) {
      const std::string err = std::string(e.what());
      out.clear();
      for (const KeepFraction& rho : cfg.grid) {
        Artifact a;
        a.path = "keepsets/" + method_dir + "/" + obj_name + "/" + rho_dir(rho) + "/" + file_stem_for(inst.id) + ".json";
        a.meta = cell_meta(rho);
        a.meta["kind"] = "keepset";
        a.error = err;
        out.push_back(std::move(a));
      }
    }
    for (auto& a : out) {
      if (a.error.empty()) write_file_atomic(cfg.out / a.path, a.content);
    }
  });

  SweepResult res;
  json artifacts = json::array();
  std::vector<const Artifact*> all;
  for (const auto& r : results) {
    for (const auto& a : r) all.push_back(&a);
  }
  std::sort(all.begin(), all.end(), [](const Artifact* a, const Artifact* b) { return a->path < b->path; });
  for (const Artifact* a : all) {
    json entry = a->meta;
    entry["path"] = a->path;
    if (a->error.empty()) {
      entry["status"] = "ok";
      entry["sha256"] = sha256_hex(a->content);
    } else {
      entry["status"] = "failed";
      entry["error"] = a->error;
    }
    if (a->meta.value("kind", "") == "keepset") {
      ++res.cells;
      if (!a->error.empty()) ++res.failed;
    }
    artifacts.push_back(std::move(entry));
  }
  json grid = json::array();
  for (const auto& g : cfg.grid) grid.push_back(g.str());
  json objectives = json::array();
  for (Objective o : cfg.objectives) objectives.push_back(std::string(objective_name(o)));
  res.manifest = {{"backend", backend->descriptor().backend_id},
                  {"dataset_sha256", sha256_hex(read_file(cfg.dataset))},
                  {"methods", cfg.methods},
                  {"objectives", objectives},
                  {"grid", grid},
                  {"seeds", cfg.seeds},
                  {"k_per_step", cfg.k_per_step},
                  {"cells", res.cells},
                  {"failed", res.failed},
                  {"artifacts", std::move(artifacts)}};
  write_file_atomic(cfg.out / "manifest.json", res.manifest.dump(2) + "\n");
  return res;
}

// ---------------------------------------------------------------------------

std::vector<json> export_sft(std::span<const Instance> instances, const std::map<std::string, PruneTrace>& traces,
                             const KeepFraction& rho) {
  std::vector<json> out;
  for (const auto& inst : instances) {
    auto it = traces.find(inst.id);
    if (it == traces.end()) throw Error(Errc::kTraceMissing, "no trace for instance '" + inst.id + "'");
    if (it->second.n != inst.n()) {
      throw Error(Errc::kLengthMismatch, "trace for '" + inst.id + "' covers " + std::to_string(it->second.n) +
                                             " units, instance has " + std::to_string(inst.n()));
    }
    const KeepSet keep = keep_set_at(it->second, rho);
    out.push_back({{"question", detokenize(inst.question)},
                   {"reasoning", detokenize(apply_keep(inst.reasoning, keep))},
                   {"answer", detokenize(inst.answer)}});
  }
  return out;
}

}  // namespace prunekit
