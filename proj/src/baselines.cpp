#include "prunekit/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunekit/error.hpp"
#include "prunekit/kernels.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

std::string_view rank_method_name(RankMethod m) noexcept {
  switch (m) {
    case RankMethod::kUniform: return "uniform";
    case RankMethod::kSurprisal: return "surprisal";
    case RankMethod::kH2O: return "h2o";
    case RankMethod::kExternal: return "external";
  }
  return "unknown";
}

std::vector<std::size_t> RankVector::deletion_order() const {
  std::vector<std::size_t> order(priorities.size());
  std::iota(order.begin(), order.end(), std::size_t{1});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return priorities[a - 1] < priorities[b - 1]; });
  return order;
}

RankVector uniform_ranks(std::size_t n, std::uint64_t seed) {
  RankVector rv;
  rv.method = RankMethod::kUniform;
  rv.priorities.resize(n);
  std::iota(rv.priorities.begin(), rv.priorities.end(), 1.0);
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(rv.priorities[i - 1], rv.priorities[j]);
  }
  return rv;
}

RankVector surprisal_ranks(const std::vector<double>& surprisals) {
  for (double s : surprisals) {
    if (!std::isfinite(s)) throw Error(Errc::kValidationError, "surprisal values must be finite");
  }
  return RankVector{"", surprisals, RankMethod::kSurprisal};
}

std::vector<double> h2o_importance(const AttentionTensor& attn, Span reasoning) {
  const std::size_t T = attn.tokens();
  if (reasoning.begin > reasoning.end || reasoning.end > T) {
    throw Error(Errc::kSpanOutOfBounds, "reasoning span [" + std::to_string(reasoning.begin) + "," +
                                            std::to_string(reasoning.end) + ") exceeds " + std::to_string(T) +
                                            " attended positions");
  }
  // Column sums restricted to strictly later queries: accumulate each query
  // row's causal prefix, skipping its diagonal.
  std::vector<double> received(T, 0.0);
  for (std::size_t l = 0; l < attn.layers(); ++l) {
    for (std::size_t h = 0; h < attn.heads(); ++h) {
      for (std::size_t i = 1; i < T; ++i) kernels::axpy(1.0, attn.row(l, h, i).first(i), std::span(received).first(i));
    }
  }
  return {received.begin() + static_cast<std::ptrdiff_t>(reasoning.begin),
          received.begin() + static_cast<std::ptrdiff_t>(reasoning.end)};
}

RankVector h2o_ranks(const AttentionTensor& attn, Span reasoning) {
  return RankVector{"", h2o_importance(attn, reasoning), RankMethod::kH2O};
}

RankVector external_ranks(const std::map<std::string, ScoreRecord>& scores, const Instance& inst) {
  auto it = scores.find(inst.id);
  if (it == scores.end()) throw Error(Errc::kMissingScores, "no importance scores for instance '" + inst.id + "'");
  const auto& rec = it->second.scores;
  for (std::size_t i = 0; i < std::min(rec.size(), inst.n()); ++i) {
    if (!rec[i]) throw Error(Errc::kMissingScores, "instance '" + inst.id + "' lacks a score for index " + std::to_string(i + 1));
  }
  if (rec.size() < inst.n()) {
    throw Error(Errc::kMissingScores,
                "instance '" + inst.id + "' lacks a score for index " + std::to_string(rec.size() + 1));
  }
  if (rec.size() > inst.n()) {
    throw Error(Errc::kLengthMismatch, "instance '" + inst.id + "' has " + std::to_string(rec.size()) +
                                           " scores for " + std::to_string(inst.n()) + " reasoning units");
  }
  RankVector rv{inst.id, {}, RankMethod::kExternal};
  rv.priorities.reserve(rec.size());
  for (const auto& s : rec) {
    if (!std::isfinite(*s)) throw Error(Errc::kValidationError, "non-finite importance for '" + inst.id + "'");
    rv.priorities.push_back(*s);
  }
  return rv;
}

KeepSet prune_by_ranks(const RankVector& ranks, const KeepFraction& rho) {
  const std::size_t n = ranks.priorities.size();
  const std::size_t drop = n - rho.retained(n);
  const auto order = ranks.deletion_order();
  std::vector<bool> removed(n + 1, false);
  for (std::size_t r = 0; r < drop; ++r) removed[order[r]] = true;
  KeepSet keep{{}, n};
  for (std::size_t i = 1; i <= n; ++i) {
    if (!removed[i]) keep.kept.push_back(i);
  }
  return keep;
}

}  // namespace prunekit
