#include <gtest/gtest.h>

#include <set>

#include "prunekit/config.hpp"
#include "prunekit/error.hpp"
#include "prunekit/io.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/toy_transformer.hpp"
#include "support.hpp"

using namespace prunekit;
namespace fs = std::filesystem;

namespace {

template <typename F>
Error expect_code(Errc code, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    return e;
  }
  ADD_FAILURE() << "expected " << errc_name(code);
  return Error(code, "");
}

const char* kThreeLines =
    R"({"id":"a","question":["Q1"],"reasoning":["x ","y ","z"],"answer":["1"]})"
    "\n"
    R"({"id":"b","question":["Q2"],"reasoning":["y ","y"],"answer":["2"]})"
    "\n"
    R"({"id":"c","question":["Q3"],"reasoning":["z"],"answer":["3"]})"
    "\n";

// Throws for any sequence containing `poison`.
class PoisonedBackend final : public LikelihoodBackend {
 public:
  PoisonedBackend(const LikelihoodBackend& inner, std::string poison) : inner_(inner), poison_(std::move(poison)) {}
  const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override {
    for (auto u : units) {
      if (u == poison_) throw Error(Errc::kBackendFailure, "endpoint returned 500");
    }
    return inner_.unit_logprobs(units, target_begin);
  }

 private:
  const LikelihoodBackend& inner_;
  std::string poison_;
};

SweepConfig two_instance_config(const fs::path& dir) {
  write_file_atomic(dir / "data.jsonl",
                    R"({"id":"p1","question":["what ","is "],"reasoning":["one ","plus ","two ","is ","three"],"answer":[" 3"]})"
                    "\n"
                    R"({"id":"p/2","question":["and "],"reasoning":["two ","times ","two"],"answer":[" 4"]})"
                    "\n");
  SweepConfig cfg;
  cfg.dataset = dir / "data.jsonl";
  cfg.out = dir / "out";
  cfg.grid = parse_grid("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9");
  return cfg;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

}  // namespace

TEST(Ingest, ReadsWellFormedFile) {
  fixtures::TempDir dir("ingest");
  write_file_atomic(dir.path() / "d.jsonl", kThreeLines);
  const auto r = ingest(dir.path() / "d.jsonl");
  ASSERT_EQ(r.instances.size(), 3u);
  EXPECT_EQ(r.instances[0].n(), 3u);
  EXPECT_EQ(r.instances[0].reasoning[2].index, 3u);
  expect_code(Errc::kIoError, [&] { ingest(dir.path() / "none.jsonl"); });
}

TEST(Ingest, MissingAnswerNamesLine) {
  fixtures::TempDir dir("ingest");
  write_file_atomic(dir.path() / "d.jsonl", std::string(kThreeLines) + R"({"id":"d","question":[],"reasoning":["q"]})" + "\n");
  const auto e = expect_code(Errc::kValidationError, [&] { ingest(dir.path() / "d.jsonl"); });
  EXPECT_NE(std::string(e.what()).find(":4"), std::string::npos) << e.what();
  const auto lenient = ingest(dir.path() / "d.jsonl", true);
  EXPECT_EQ(lenient.instances.size(), 3u);
  ASSERT_EQ(lenient.skipped.size(), 1u);
}

TEST(Ingest, DuplicateIdAlwaysFails) {
  fixtures::TempDir dir("ingest");
  write_file_atomic(dir.path() / "d.jsonl", std::string(kThreeLines) + R"({"id":"b","question":[],"reasoning":["q"],"answer":["1"]})" + "\n");
  expect_code(Errc::kDuplicateId, [&] { ingest(dir.path() / "d.jsonl"); });
  expect_code(Errc::kDuplicateId, [&] { ingest(dir.path() / "d.jsonl", true); });
}

TEST(Backends, FromSpecStrings) {
  const auto world = fixtures::random_ngram_world(1, 3, 5);
  const auto ng = make_backend("ngram:order=3,alpha=0.5", world.instances);
  EXPECT_NE(ng->descriptor().backend_id.find("ngram"), std::string::npos);
  const auto toy = make_backend("toy:seed=4", world.instances);
  EXPECT_EQ(toy->descriptor().backend_id, ToyTransformer(4).descriptor().backend_id);
  for (const char* bad : {"ngram:order=9", "ngram:alpha=x", "toy:seed=", "gpt:big", ""}) {
    SCOPED_TRACE(bad);
    EXPECT_THROW(make_backend(bad, world.instances), Error);
  }
}

TEST(Text, SplittingRestoresText) {
  const std::string text = "  Let x = 3.\nThen  2x = 6";
  std::string joined;
  for (const auto& w : split_words(text)) joined += w;
  EXPECT_EQ(joined, text);
  const auto units = split_by_offsets("abcdef", {{1, 3}, {4, 6}});
  EXPECT_EQ(units, (std::vector<std::string>{"abcd", "ef"}));
  EXPECT_EQ(normalize_answer("  The\t Answer \n"), "the answer");
}

TEST(Sweep, CartesianCellCount) {
  fixtures::TempDir dir("sweep");
  const auto cfg = two_instance_config(dir.path());
  const auto res = sweep(cfg);
  EXPECT_EQ(res.cells, 36u);
  EXPECT_EQ(res.failed, 0u);
  EXPECT_EQ(res.exit_code(), 0);
  std::size_t keepsets = 0, traces = 0;
  for (const auto& a : res.manifest["artifacts"]) {
    EXPECT_EQ(a["status"], "ok");
    EXPECT_TRUE(fs::exists(cfg.out / a["path"].get<std::string>()));
    (a["kind"] == "keepset" ? keepsets : traces)++;
  }
  EXPECT_EQ(keepsets, 36u);
  EXPECT_EQ(traces, 2u);
  EXPECT_TRUE(fs::exists(cfg.out / "manifest.json"));
}

TEST(Sweep, KeepSetSizesAgreeAcrossMethods) {
  fixtures::TempDir dir("sweep");
  auto cfg = two_instance_config(dir.path());
  cfg.methods = {"greedy", "surprisal", "uniform"};
  cfg.backend = "toy:seed=2";
  cfg.methods.push_back("h2o");
  std::sort(cfg.methods.begin(), cfg.methods.end());
  const auto res = sweep(cfg);
  EXPECT_EQ(res.failed, 0u);
  std::map<std::pair<std::string, std::string>, std::set<std::size_t>> sizes;
  for (const auto& a : res.manifest["artifacts"]) {
    if (a["kind"] != "keepset") continue;
    sizes[{a["instance"].get<std::string>(), a["rho"].get<std::string>()}].insert(a["m"].get<std::size_t>());
  }
  EXPECT_EQ(sizes.size(), 18u);
  for (const auto& [cell, m] : sizes) EXPECT_EQ(m.size(), 1u) << cell.first << " " << cell.second;
}

TEST(Sweep, RerunIsByteIdentical) {
  fixtures::TempDir dir("sweep");
  auto cfg = two_instance_config(dir.path());
  cfg.backend = "toy:seed=1";
  cfg.objectives = {Objective::kAns, Objective::kJoint};
  cfg.seeds = {0, 5};
  cfg.record_steps = true;
  sweep(cfg);
  const auto first = tree_bytes(cfg.out);
  fs::remove_all(cfg.out);
  cfg.parallelism = 3;
  sweep(cfg);
  EXPECT_EQ(tree_bytes(cfg.out), first);
}

TEST(Sweep, FailedCellIsIsolated) {
  fixtures::TempDir dir("sweep");
  const auto cfg = two_instance_config(dir.path());
  const auto dataset = ingest(cfg.dataset).instances;
  const auto real = make_backend(cfg.backend, dataset);
  const PoisonedBackend poisoned(*real, "times ");
  const auto res = sweep(cfg, &poisoned);
  EXPECT_EQ(res.cells, 36u);
  EXPECT_EQ(res.failed, 18u);  // every cell of p/2 needs a score
  EXPECT_EQ(res.exit_code(), 1);
  for (const auto& a : res.manifest["artifacts"]) {
    if (a["instance"] == "p1") {
      EXPECT_EQ(a["status"], "ok");
    } else {
      EXPECT_EQ(a["status"], "failed");
      EXPECT_NE(a["error"].get<std::string>().find("BackendFailure"), std::string::npos);
    }
  }
}

TEST(Sweep, SanitizesIdsInPaths) {
  fixtures::TempDir dir("sweep");
  const auto cfg = two_instance_config(dir.path());
  const auto res = sweep(cfg);
  std::set<std::string> stems;
  for (const auto& a : res.manifest["artifacts"]) {
    if (a["instance"] == "p/2") stems.insert(fs::path(a["path"].get<std::string>()).filename().string());
  }
  ASSERT_EQ(stems.size(), 1u);
  EXPECT_EQ(stems.begin()->substr(0, 4), "p_2-");
}

TEST(SweepConfig, FromToml) {
  fixtures::TempDir dir("cfg");
  write_file_atomic(dir.path() / "s.toml", R"(
dataset = "data.jsonl"
backend = "toy:seed=3"
methods = ["uniform", "greedy", "uniform"]
objectives = ["ans"]
grid = ["0.5", "0.25", "1.0"]
out = "results"
)");
  const auto cfg = load_sweep_config(dir.path() / "s.toml");
  EXPECT_EQ(cfg.dataset, dir.path() / "data.jsonl");
  EXPECT_EQ(cfg.out, dir.path() / "results");
  EXPECT_EQ(cfg.methods, (std::vector<std::string>{"greedy", "uniform"}));
  EXPECT_EQ(cfg.grid.front(), KeepFraction(1, 4));
  EXPECT_EQ(cfg.objectives, (std::vector<Objective>{Objective::kAns}));

  for (const char* bad : {"methods = [\"random\"]", "grid = [\"0\"]", "methods = [\"external\"]", "seeds = []",
                          "parallelism = \"many\""}) {
    SCOPED_TRACE(bad);
    expect_code(Errc::kConfigError, [&] { sweep_config_from_json(parse_toml(bad), dir.path()); });
  }
}

TEST(ExportSft, IdentityAndPrunedChain) {
  const auto m = fixtures::abc_unigram();
  const auto inst = fixtures::make_instance("u", {"Q"}, {"b", "a", "c"}, {"a"});
  GreedyConfig cfg;
  cfg.rho_min = KeepFraction(1, 3);
  const std::map<std::string, PruneTrace> traces{{"u", greedy_prune(m, inst, cfg)}};
  const std::vector<Instance> insts{inst};
  const auto full = export_sft(insts, traces, KeepFraction::one());
  EXPECT_EQ(full[0]["reasoning"], "bac");
  EXPECT_EQ(full[0]["question"], "Q");
  EXPECT_EQ(export_sft(insts, traces, KeepFraction(1, 3))[0]["reasoning"], "a");

  const auto other = fixtures::make_instance("v", {}, {"a"}, {"a"});
  const auto e = expect_code(Errc::kTraceMissing, [&] { export_sft(std::vector<Instance>{other}, traces, KeepFraction::one()); });
  EXPECT_NE(std::string(e.what()).find("'v'"), std::string::npos);
}
