#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/backend.hpp"
#include "prunekit/core.hpp"

namespace prunekit {

enum class RankMethod { kUniform, kSurprisal, kH2O, kExternal };

std::string_view rank_method_name(RankMethod m) noexcept;

// Lower priority is pruned earlier; equal priorities prune the lower index
// first.
struct RankVector {
  std::string instance_id;
  std::vector<double> priorities;
  RankMethod method{RankMethod::kUniform};

  // 1-based indices in deletion order.
  std::vector<std::size_t> deletion_order() const;
};

// A seeded permutation of 1..n (Fisher-Yates over SplitMix64).
RankVector uniform_ranks(std::size_t n, std::uint64_t seed);

RankVector surprisal_ranks(const std::vector<double>& surprisals);

// Half-open position range [begin, end) of the reasoning units inside the
// attended sequence.
struct Span {
  std::size_t begin{};
  std::size_t end{};
  std::size_t size() const noexcept { return end - begin; }
};

// I(t) = sum over later positions i and all (layer, head) of A[i -> t].
std::vector<double> h2o_importance(const AttentionTensor& attn, Span reasoning);
RankVector h2o_ranks(const AttentionTensor& attn, Span reasoning);

// External per-token importance, e.g. from an importance classifier.
struct ScoreRecord {
  std::string id;
  std::vector<std::optional<double>> scores;
};

RankVector external_ranks(const std::map<std::string, ScoreRecord>& scores, const Instance& inst);

// Keeps the ceil(rho * n) highest-priority tokens.
KeepSet prune_by_ranks(const RankVector& ranks, const KeepFraction& rho);

}  // namespace prunekit
