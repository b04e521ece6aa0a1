// prunekit command-line driver.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prunekit/analysis.hpp"
#include "prunekit/baselines.hpp"
#include "prunekit/config.hpp"
#include "prunekit/error.hpp"
#include "prunekit/io.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/scoring.hpp"
#include "prunekit/surrogate.hpp"
#include "prunekit/toy_transformer.hpp"

using namespace prunekit;
namespace fs = std::filesystem;

namespace {

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
  } else {
    write_file_atomic(out, content);
  }
}

std::vector<std::string_view> full_sequence(const Instance& inst) {
  std::vector<std::string_view> seq;
  for (const Units* part : {&inst.question, &inst.reasoning, &inst.answer}) {
    for (const auto& u : *part) seq.push_back(u.text);
  }
  return seq;
}

std::map<std::string, PruneTrace> traces_by_id(const std::string& path) {
  std::map<std::string, PruneTrace> out;
  for (auto& t : read_traces(path)) {
    const std::string id = t.instance_id;
    if (!out.emplace(id, std::move(t)).second) throw Error(Errc::kDuplicateId, "duplicate trace id '" + id + "'");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Greedy likelihood-preserving pruning of reasoning chains"};
  app.require_subcommand(1);

  std::string backend_spec = "ngram:order=2,alpha=0.1";
  std::string objective = "joint";
  std::string rho_text = "0.5";
  std::string rho_min_text = "0.1";
  std::size_t k_per_step = 1;
  bool record_steps = false;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  std::string out;
  std::string input;
  bool lenient = false;

  auto add_backend = [&](CLI::App* c) {
    c->add_option("--backend", backend_spec, "ngram:order=N,alpha=A[,corpus=P] | toy:seed=S | remote:URL");
  };

  auto* ingest_cmd = app.add_subcommand("ingest", "Validate an instance JSONL file");
  ingest_cmd->add_option("input", input)->required();
  ingest_cmd->add_flag("--lenient", lenient, "Skip malformed lines instead of failing");
  ingest_cmd->add_option("--out", out);

  std::string questions_path, config_path;
  std::size_t samples = 10;
  auto* gen_cmd = app.add_subcommand("generate", "Rejection-sample reasoning chains from a generation endpoint");
  gen_cmd->add_option("questions", questions_path)->required();
  gen_cmd->add_option("--config", config_path, "TOML file with a [remote] table")->required();
  gen_cmd->add_option("--samples", samples);
  gen_cmd->add_option("--seed", seed);
  gen_cmd->add_option("--out", out);

  auto* prune_cmd = app.add_subcommand("prune", "Greedy pruning traces");
  prune_cmd->add_option("input", input)->required();
  add_backend(prune_cmd);
  prune_cmd->add_option("--objective", objective)->check(CLI::IsMember({"joint", "ans"}));
  prune_cmd->add_option("--rho-min", rho_min_text);
  prune_cmd->add_option("--k-per-step", k_per_step);
  prune_cmd->add_flag("--record-steps", record_steps);
  prune_cmd->add_option("--parallelism", parallelism);
  prune_cmd->add_option("--out", out);

  std::string method = "uniform";
  std::string scores_path;
  auto* base_cmd = app.add_subcommand("baseline", "Keep sets from a baseline ranking");
  base_cmd->add_option("input", input)->required();
  base_cmd->add_option("--method", method)->check(CLI::IsMember({"uniform", "surprisal", "h2o", "external"}));
  add_backend(base_cmd);
  base_cmd->add_option("--rho", rho_text);
  base_cmd->add_option("--seed", seed);
  base_cmd->add_option("--scores", scores_path, "External score JSONL");
  base_cmd->add_option("--out", out);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a configured experiment sweep");
  sweep_cmd->add_option("config", config_path)->required();
  sweep_cmd->add_option("--parallelism", parallelism);
  sweep_cmd->add_option("--out", out, "Overrides the configured output directory");

  std::string traces_path, annotations_path, grid_text = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::string delta_text = "0.1", averaging = "micro";
  auto* analyze_cmd = app.add_subcommand("analyze", "Category retention, rank dynamics and frequency tables");
  analyze_cmd->require_subcommand(1);
  auto* retention_cmd = analyze_cmd->add_subcommand("retention");
  retention_cmd->add_option("--traces", traces_path)->required();
  retention_cmd->add_option("--annotations", annotations_path)->required();
  retention_cmd->add_option("--grid", grid_text);
  retention_cmd->add_option("--averaging", averaging)->check(CLI::IsMember({"micro", "macro"}));
  retention_cmd->add_option("--out", out);
  auto* dynamics_cmd = analyze_cmd->add_subcommand("dynamics");
  dynamics_cmd->add_option("--traces", traces_path)->required();
  dynamics_cmd->add_option("--grid", grid_text);
  dynamics_cmd->add_option("--delta", delta_text);
  dynamics_cmd->add_option("--out", out);
  auto* freq_cmd = analyze_cmd->add_subcommand("freq");
  freq_cmd->add_option("--annotations", annotations_path)->required();
  freq_cmd->add_option("--out", out);

  std::string features_path, model_path;
  std::size_t hidden = 16, epochs = 500;
  double learning_rate = 0.5;
  auto* sur_cmd = app.add_subcommand("surrogate", "Attention-feature surrogate of first-stage deletion scores");
  sur_cmd->require_subcommand(1);
  auto* extract_cmd = sur_cmd->add_subcommand("extract");
  extract_cmd->add_option("input", input)->required();
  add_backend(extract_cmd);
  extract_cmd->add_option("--traces", traces_path, "Traces recorded with --record-steps; supplies targets");
  extract_cmd->add_option("--out", out);
  auto* train_cmd = sur_cmd->add_subcommand("train");
  train_cmd->add_option("--features", features_path)->required();
  train_cmd->add_option("--hidden", hidden);
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--lr", learning_rate);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--out", out);
  auto* eval_cmd = sur_cmd->add_subcommand("eval");
  eval_cmd->add_option("--features", features_path)->required();
  eval_cmd->add_option("--model", model_path)->required();

  auto* export_cmd = app.add_subcommand("export-sft", "Pruned supervised fine-tuning records");
  export_cmd->add_option("input", input)->required();
  export_cmd->add_option("--traces", traces_path)->required();
  export_cmd->add_option("--rho", rho_text);
  export_cmd->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      auto res = ingest(input, lenient);
      for (const auto& s : res.skipped) std::cerr << "skipped " << s << "\n";
      std::vector<json> rows;
      for (const auto& i : res.instances) rows.push_back(instance_to_json(i));
      emit(out, to_jsonl(rows));
      std::cerr << res.instances.size() << " instances\n";
      return 0;
    }
    if (*gen_cmd) {
      json tree = load_toml(config_path);
      RemoteConfig rc;
      if (auto* r = tree.contains("remote") ? &tree["remote"] : nullptr) {
        rc.score_url = r->value("score_url", "");
        rc.generate_url = r->value("generate_url", "");
        rc.timeout_seconds = r->value("timeout_seconds", rc.timeout_seconds);
        rc.retries = r->value("retries", rc.retries);
      }
      RemoteClient client(rc);
      SamplingSpec spec;
      spec.samples_per_question = samples;
      spec.seed = seed;
      const auto questions = read_questions(questions_path);
      const auto instances = generate(client, questions, spec);
      std::vector<json> rows;
      for (const auto& i : instances) rows.push_back(instance_to_json(i));
      emit(out, to_jsonl(rows));
      std::cerr << instances.size() << " of " << questions.size() << " questions kept\n";
      return 0;
    }
    if (*prune_cmd) {
      const auto data = ingest(input).instances;
      auto backend = make_backend(backend_spec, data);
      GreedyConfig gc;
      gc.objective = parse_objective(objective);
      gc.rho_min = KeepFraction::parse(rho_min_text);
      gc.k_per_step = k_per_step;
      gc.record_steps = record_steps;
      gc.parallelism = parallelism;
      ScoreCache cache;
      gc.cache = &cache;
      std::vector<json> rows;
      for (const auto& inst : data) rows.push_back(trace_to_json(greedy_prune(*backend, inst, gc)));
      emit(out, to_jsonl(rows));
      return 0;
    }
    if (*base_cmd) {
      const auto data = ingest(input).instances;
      const KeepFraction rho = KeepFraction::parse(rho_text);
      std::unique_ptr<LikelihoodBackend> backend;
      if (method == "surprisal" || method == "h2o") backend = make_backend(backend_spec, data);
      std::map<std::string, ScoreRecord> external;
      if (method == "external") {
        if (scores_path.empty()) throw Error(Errc::kConfigError, "--method external needs --scores");
        external = read_score_records(scores_path);
      }
      std::vector<json> rows;
      for (const auto& inst : data) {
        RankVector ranks;
        if (method == "uniform") {
          ranks = uniform_ranks(inst.n(), derive_seed(seed, inst.id));
        } else if (method == "surprisal") {
          ranks = surprisal_ranks(token_surprisals(*backend, inst.question, inst.reasoning, inst.answer));
        } else if (method == "h2o") {
          const std::size_t q = inst.question.size();
          ranks = h2o_ranks(backend->attention(full_sequence(inst)), Span{q, q + inst.n()});
        } else {
          ranks = external_ranks(external, inst);
        }
        const KeepSet keep = prune_by_ranks(ranks, rho);
        rows.push_back({{"id", inst.id}, {"method", method}, {"rho", rho.str()}, {"n", inst.n()}, {"kept", keep.kept}});
      }
      emit(out, to_jsonl(rows));
      return 0;
    }
    if (*sweep_cmd) {
      SweepConfig cfg;
      try {
        cfg = load_sweep_config(config_path);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
      }
      if (sweep_cmd->count("--parallelism") > 0) cfg.parallelism = std::max<std::size_t>(1, parallelism);
      if (!out.empty()) cfg.out = out;
      SweepResult res;
      try {
        res = sweep(cfg);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return e.code() == Errc::kConfigError ? 2 : 1;
      }
      std::cerr << res.cells - res.failed << "/" << res.cells << " cells ok; manifest at "
                << (cfg.out / "manifest.json").string() << "\n";
      return res.exit_code();
    }
    if (*retention_cmd) {
      std::vector<PruneTrace> traces = read_traces(traces_path);
      auto grid = parse_grid(grid_text);
      if (!retention_cmd->count("--grid")) {
        // Default grid: only values every trace reaches.
        KeepFraction floor = KeepFraction(1, 1000000);
        for (const auto& t : traces) floor = std::max(floor, t.rho_min);
        std::erase_if(grid, [&](const KeepFraction& r) { return r < floor; });
      }
      const auto rows = retention_curves(traces, read_annotations(annotations_path), grid,
                                         averaging == "macro" ? Averaging::kMacro : Averaging::kMicro);
      emit(out, retention_csv(rows));
      return 0;
    }
    if (*dynamics_cmd) {
      std::vector<PruneTrace> traces = read_traces(traces_path);
      const auto grid = parse_grid(grid_text);
      const std::vector<HitMode> modes{HitMode::kDynamic, HitMode::kFrozen, HitMode::kRandom};
      emit(out, dynamics_csv(dynamics_curve(traces, grid, KeepFraction::parse(delta_text), modes)));
      return 0;
    }
    if (*freq_cmd) {
      std::vector<AnnotationSet> anns;
      for (auto& [id, a] : read_annotations(annotations_path)) anns.push_back(std::move(a));
      emit(out, frequency_csv(category_frequency(anns)));
      return 0;
    }
    if (*extract_cmd) {
      const auto data = ingest(input).instances;
      auto backend = make_backend(backend_spec, data);
      std::map<std::string, PruneTrace> traces;
      if (!traces_path.empty()) traces = traces_by_id(traces_path);
      FeatureTable table;
      std::size_t heads = 1;
      for (const auto& inst : data) {
        const AttentionTensor attn = backend->attention(full_sequence(inst));
        heads = attn.heads();
        const std::size_t q = inst.question.size();
        table.features.append(extract_features(attn, Span{q, q + inst.n()}));
        for (std::size_t i = 1; i <= inst.n(); ++i) {
          table.ids.push_back(inst.id);
          table.indices.push_back(i);
        }
        if (!traces_path.empty()) {
          auto it = traces.find(inst.id);
          if (it == traces.end()) throw Error(Errc::kTraceMissing, "no trace for instance '" + inst.id + "'");
          const auto t = first_stage_targets(it->second);
          table.targets.insert(table.targets.end(), t.begin(), t.end());
        }
      }
      emit(out, feature_csv(table, heads));
      return 0;
    }
    if (*train_cmd) {
      const FeatureTable table = parse_feature_csv(read_file(features_path));
      SurrogateHyper hyper;
      hyper.hidden = hidden;
      hyper.epochs = epochs;
      hyper.learning_rate = learning_rate;
      hyper.seed = seed;
      const TrainingResult res = train_surrogate(table.features, table.targets, hyper);
      emit(out, surrogate_to_json(res.model).dump() + "\n");
      std::cerr << "train pearson " << res.curve.back() << "\n";
      return 0;
    }
    if (*eval_cmd) {
      const FeatureTable table = parse_feature_csv(read_file(features_path));
      const SurrogateModel model = surrogate_from_json(json::parse(read_file(model_path)));
      std::printf("%.6f\n", eval_surrogate(model, table.features, table.targets));
      return 0;
    }
    if (*export_cmd) {
      const auto data = ingest(input).instances;
      emit(out, to_jsonl(export_sft(data, traces_by_id(traces_path), KeepFraction::parse(rho_text))));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == Errc::kConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
