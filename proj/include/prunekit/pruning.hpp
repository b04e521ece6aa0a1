#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prunekit/backend.hpp"
#include "prunekit/core.hpp"
#include "prunekit/error.hpp"
#include "prunekit/scoring.hpp"

namespace prunekit {

struct GreedyConfig {
  Objective objective{Objective::kJoint};
  KeepFraction rho_min{1, 10};
  std::size_t k_per_step{1};
  bool record_steps{false};
  std::size_t parallelism{1};
  ScoreCache* cache{nullptr};
};

// Two candidate scores tie when they agree to 1e-12 relative (or are both
// -inf). Summation order differs between distinct candidate chains, so exact
// equality would let rounding noise override the lowest-index rule.
bool scores_tie(double a, double b) noexcept;

// Positions (into `scores`) of the k candidates to delete, in rank order:
// repeatedly take the maximum, resolving ties to the lowest position.
std::vector<std::size_t> select_removals(std::span<const double> scores, std::size_t k);

// A backend failure interrupted greedy_prune; partial() holds every
// completed stage and resume_at_step marks where to continue.
class PartialTraceError : public Error {
 public:
  PartialTraceError(Errc code, const std::string& what, PruneTrace partial)
      : Error(code, what), partial_(std::move(partial)) {}
  const PruneTrace& partial() const noexcept { return partial_; }

 private:
  PruneTrace partial_;
};

// Greedy likelihood-preserving deletion. While more than ceil(rho_min * n)
// units remain, every single deletion is scored and the k_per_step
// candidates with the highest post-deletion objective are removed.
// `resume` continues an interrupted trace of the same instance.
PruneTrace greedy_prune(const LikelihoodBackend& backend, const Instance& inst, const GreedyConfig& cfg,
                        const PruneTrace* resume = nullptr);

struct OracleViolation {
  std::size_t step{};
  std::size_t index{};  // reasoning index involved, 0 if none
  std::string message;
};

struct OracleReport {
  std::size_t steps_checked{0};
  std::vector<OracleViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
  const OracleViolation* first() const noexcept { return violations.empty() ? nullptr : &violations.front(); }
};

// Replays a recorded trace, recomputing every stage's candidate scores with
// plain objective_score calls, and checks that the tokens the ranks say were
// removed are exactly the maximizers under the lowest-index tie-break.
OracleReport stepwise_oracle_check(const PruneTrace& trace, const LikelihoodBackend& backend, const Instance& inst,
                                   const GreedyConfig& cfg);

struct SubsetResult {
  KeepSet keep;
  double total{0.0};
};

// Exhaustive maximum of the objective over all size-m keep sets (n <= 16).
// Among tied optima the lexicographically smallest removed set wins, which
// matches greedy's lowest-index deletion rule.
SubsetResult brute_force_subset(const LikelihoodBackend& backend, const Instance& inst, Objective obj, std::size_t m);

}  // namespace prunekit
