#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunekit/backend.hpp"
#include "prunekit/core.hpp"
#include "prunekit/remote.hpp"

namespace prunekit {

struct IngestResult {
  std::vector<Instance> instances;
  std::vector<std::string> skipped;  // "<path>:<line>: reason", lenient mode only
};

// Malformed or invalid lines throw ParseError / ValidationError naming the
// line, unless `lenient`, in which case they are reported and skipped.
// Duplicate ids always throw DuplicateId.
IngestResult ingest(const std::filesystem::path& path, bool lenient = false);

// Backend from a spec string:
//   ngram:order=2,alpha=0.1[,corpus=<instances.jsonl>]   fit on corpus or `dataset`
//   toy:seed=7
//   remote:<score url>                                    other settings from `remote`
std::unique_ptr<LikelihoodBackend> make_backend(std::string_view spec, std::span<const Instance> dataset,
                                                const RemoteConfig& remote = {});

// Trim, collapse internal whitespace runs to one space, lowercase.
std::string normalize_answer(std::string_view text);
bool answers_match(std::string_view a, std::string_view b);

// Splits text into units at word boundaries, each unit carrying its trailing
// whitespace, so that concatenation restores the text.
std::vector<std::string> split_words(std::string_view text);

// Units whose i-th member runs from offsets[i].first to the next unit's start
// (the last one to the end of the text), so no byte is dropped. Leading bytes
// before the first offset join the first unit.
std::vector<std::string> split_by_offsets(std::string_view text,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& offsets);

struct SamplingSpec {
  double temperature{0.7};
  double top_p{1.0};
  std::size_t samples_per_question{10};
  std::uint64_t seed{0};
  std::function<bool(std::string_view, std::string_view)> checker{answers_match};
};

struct Question {
  std::string id;
  std::vector<std::string> question;  // units
  std::string gold;
};

std::vector<Question> read_questions(const std::filesystem::path& path);

// Rejection sampling through the generation endpoint:
//   POST {"id", "prompt", "temperature", "top_p", "n"}
//     -> {"samples": [{"reasoning": str, "reasoning_offsets": [[s, e]...],
//                      "answer": str, "answer_offsets": [[s, e]...]}]}
// One uniformly drawn correct sample per question; questions without a
// correct sample are dropped.
std::vector<Instance> generate(const RemoteClient& client, std::span<const Question> questions,
                               const SamplingSpec& spec);

struct SweepConfig {
  std::filesystem::path dataset;
  std::string backend{"ngram:order=2,alpha=0.1"};
  std::vector<Objective> objectives{Objective::kJoint};
  std::vector<std::string> methods{"greedy", "uniform"};
  std::vector<KeepFraction> grid{default_grid()};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out{"sweep-out"};
  std::size_t parallelism{1};
  std::size_t k_per_step{1};
  bool record_steps{false};
  std::optional<std::filesystem::path> external_scores;
  RemoteConfig remote;
};

// Reads a TOML config; relative paths resolve against `base_dir`.
// Problems throw ConfigError.
SweepConfig load_sweep_config(const std::filesystem::path& path);
SweepConfig sweep_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct SweepResult {
  nlohmann::json manifest;
  std::size_t cells{0};
  std::size_t failed{0};
  int exit_code() const noexcept { return failed == 0 ? 0 : 1; }
};

// Runs every instance x method x objective x rho (x seed for uniform) cell,
// writes keep sets, greedy traces and manifest.json under cfg.out. A failed
// cell is recorded with its error and does not stop the others. A non-null
// `backend` overrides cfg.backend.
SweepResult sweep(const SweepConfig& cfg, const LikelihoodBackend* backend = nullptr);

// {"question", "reasoning", "answer"} per instance with the reasoning pruned
// to rho. Throws TraceMissing for an instance without a trace.
std::vector<nlohmann::json> export_sft(std::span<const Instance> instances,
                                       const std::map<std::string, PruneTrace>& traces, const KeepFraction& rho);

}  // namespace prunekit
