#include "prunekit/pruning.hpp"

#include <algorithm>
#include <cmath>

namespace prunekit {

bool scores_tie(double a, double b) noexcept {
  if (a == b) return true;
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<std::size_t> select_removals(std::span<const double> scores, std::size_t k) {
  std::vector<bool> taken(scores.size(), false);
  std::vector<std::size_t> out;
  k = std::min(k, scores.size());
  while (out.size() < k) {
    double best = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (taken[j]) continue;
      if (!any || scores[j] > best) best = scores[j];
      any = true;
    }
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!taken[j] && scores_tie(scores[j], best)) {
        taken[j] = true;
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

PruneTrace greedy_prune(const LikelihoodBackend& backend, const Instance& inst, const GreedyConfig& cfg,
                        const PruneTrace* resume) {
  if (inst.answer.empty()) throw Error(Errc::kDegenerateAnswer, "instance '" + inst.id + "' has an empty answer");
  validate_instance(inst);
  if (cfg.k_per_step == 0) throw Error(Errc::kConfigError, "k_per_step must be at least 1");
  const std::size_t n = inst.n();
  const std::size_t m = cfg.rho_min.retained(n);

  PruneTrace trace;
  trace.instance_id = inst.id;
  trace.objective = cfg.objective;
  trace.n = n;
  trace.rho_min = cfg.rho_min;
  trace.ranks.assign(n, std::nullopt);
  if (cfg.record_steps) trace.steps.emplace();

  std::size_t next_rank = 1;
  std::size_t stage = 1;
  if (resume != nullptr) {
    if (resume->instance_id != inst.id || resume->n != n || resume->objective != cfg.objective) {
      throw Error(Errc::kValidationError, "resume trace does not belong to instance '" + inst.id + "'");
    }
    trace.ranks = resume->ranks;
    next_rank = resume->removed_count() + 1;
    if (cfg.record_steps) trace.steps = resume->steps.value_or(std::vector<StepRecord>{});
    stage = resume->resume_at_step.value_or(trace.steps ? trace.steps->size() + 1 : next_rank);
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!trace.ranks[i]) kept.push_back(i + 1);
  }

  while (kept.size() > m) {
    std::vector<double> scores;
    try {
      scores = deletion_scores(backend, cfg.objective, inst, kept, cfg.parallelism, cfg.cache);
    } catch (const Error& e) {
      PruneTrace partial = trace;
      partial.resume_at_step = stage;
      throw PartialTraceError(e.code(), "stage " + std::to_string(stage) + " of '" + inst.id + "': " + e.what(),
                              std::move(partial));
    }
    const auto picks = select_removals(scores, std::min(cfg.k_per_step, kept.size() - m));
    StepRecord rec;
    rec.step = stage;
    if (cfg.record_steps) {
      for (std::size_t j = 0; j < kept.size(); ++j) rec.candidate_scores.emplace(kept[j], scores[j]);
    }
    std::vector<bool> drop(kept.size(), false);
    for (std::size_t pos : picks) {
      trace.ranks[kept[pos] - 1] = next_rank++;
      rec.removed.push_back(kept[pos]);
      drop[pos] = true;
    }
    std::vector<std::size_t> next;
    next.reserve(kept.size() - picks.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (!drop[j]) next.push_back(kept[j]);
    }
    kept = std::move(next);
    if (cfg.record_steps) trace.steps->push_back(std::move(rec));
    ++stage;
  }
  return trace;
}

// ---------------------------------------------------------------------------

namespace {

double recompute(const LikelihoodBackend& backend, Objective obj, const Instance& inst,
                 const std::vector<std::size_t>& kept, std::size_t skip) {
  Units rk;
  for (std::size_t idx : kept) {
    if (idx != skip) rk.push_back(inst.reasoning[idx - 1]);
  }
  return objective_score(backend, obj, inst.question, rk, inst.answer).total;
}

}  // namespace

OracleReport stepwise_oracle_check(const PruneTrace& trace, const LikelihoodBackend& backend, const Instance& inst,
                                   const GreedyConfig& cfg) {
  if (!trace.steps) throw Error(Errc::kUnsupportedTrace, "trace '" + trace.instance_id + "' has no step records");
  if (trace.n != inst.n()) throw Error(Errc::kLengthMismatch, "trace and instance lengths differ");

  OracleReport report;
  std::vector<std::size_t> order;
  try {
    order = trace.removal_order();
  } catch (const Error& e) {
    report.violations.push_back({0, 0, e.what()});
    return report;
  }

  const std::size_t m = trace.rho_min.retained(trace.n);
  std::vector<std::size_t> kept(trace.n);
  for (std::size_t i = 0; i < trace.n; ++i) kept[i] = i + 1;
  std::size_t consumed = 0;

  for (const StepRecord& rec : *trace.steps) {
    ++report.steps_checked;
    const std::size_t want = std::min(cfg.k_per_step, kept.size() > m ? kept.size() - m : 0);
    if (rec.removed.size() != want) {
      report.violations.push_back({rec.step, 0, "stage removed " + std::to_string(rec.removed.size()) +
                                                    " tokens, expected " + std::to_string(want)});
      return report;
    }
    if (consumed + want > order.size()) {
      report.violations.push_back({rec.step, 0, "ranks end before this stage"});
      return report;
    }

    std::vector<double> fresh(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j) fresh[j] = recompute(backend, trace.objective, inst, kept, kept[j]);

    for (std::size_t j = 0; j < kept.size(); ++j) {
      auto it = rec.candidate_scores.find(kept[j]);
      if (it == rec.candidate_scores.end()) {
        report.violations.push_back({rec.step, kept[j], "candidate missing from recorded scores"});
      } else if (!(it->second == fresh[j]) &&
                 !(std::abs(it->second - fresh[j]) <= 1e-9 * std::max(1.0, std::abs(fresh[j])))) {
        report.violations.push_back({rec.step, kept[j], "recorded score differs from recomputation"});
      }
    }

    // Expected maximizers, derived independently of select_removals.
    std::vector<std::size_t> expected;
    std::vector<bool> used(kept.size(), false);
    for (std::size_t r = 0; r < want; ++r) {
      std::size_t best = kept.size();
      for (std::size_t j = 0; j < kept.size(); ++j) {
        if (used[j]) continue;
        if (best == kept.size() || (fresh[j] > fresh[best] && !scores_tie(fresh[j], fresh[best]))) best = j;
      }
      // lowest index among everything tied with the maximum
      for (std::size_t j = 0; j < kept.size(); ++j) {
        if (!used[j] && scores_tie(fresh[j], fresh[best])) {
          best = j;
          break;
        }
      }
      used[best] = true;
      expected.push_back(kept[best]);
    }

    for (std::size_t r = 0; r < want; ++r) {
      const std::size_t actual = order[consumed + r];
      if (actual != expected[r]) {
        report.violations.push_back({rec.step, actual,
                                     "rank " + std::to_string(consumed + r + 1) + " removed index " +
                                         std::to_string(actual) + " but the stage maximum is index " +
                                         std::to_string(expected[r])});
      }
      if (rec.removed[r] != actual) {
        report.violations.push_back({rec.step, rec.removed[r], "step record disagrees with ranks"});
      }
    }
    if (!report.ok()) return report;

    for (std::size_t r = 0; r < want; ++r) {
      kept.erase(std::find(kept.begin(), kept.end(), order[consumed + r]));
    }
    consumed += want;
  }

  if (!trace.resume_at_step && kept.size() != m) {
    report.violations.push_back({report.steps_checked, 0,
                                 "trace stops with " + std::to_string(kept.size()) + " kept, expected " +
                                     std::to_string(m)});
  }
  if (consumed != order.size()) {
    report.violations.push_back({report.steps_checked, 0, "ranks extend beyond the recorded stages"});
  }
  return report;
}

// ---------------------------------------------------------------------------

SubsetResult brute_force_subset(const LikelihoodBackend& backend, const Instance& inst, Objective obj, std::size_t m) {
  const std::size_t n = inst.n();
  if (n > 16) throw Error(Errc::kTooLarge, "brute force is limited to n <= 16, got " + std::to_string(n));
  if (m == 0 || m > n) throw Error(Errc::kValidationError, "keep size must lie in [1, n]");

  std::vector<std::size_t> comb(m);
  for (std::size_t i = 0; i < m; ++i) comb[i] = i + 1;

  auto removed_of = [n](const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> out;
    std::size_t j = 0;
    for (std::size_t i = 1; i <= n; ++i) {
      if (j < keep.size() && keep[j] == i) {
        ++j;
      } else {
        out.push_back(i);
      }
    }
    return out;
  };

  SubsetResult best;
  bool have = false;
  while (true) {
    Units rk;
    for (std::size_t idx : comb) rk.push_back(inst.reasoning[idx - 1]);
    const double total = objective_score(backend, obj, inst.question, rk, inst.answer).total;
    bool take = !have;
    if (have) {
      if (scores_tie(total, best.total)) {
        take = removed_of(comb) < removed_of(best.keep.kept);
      } else {
        take = total > best.total;
      }
    }
    if (take) {
      best.keep = KeepSet{comb, n};
      best.total = total;
      have = true;
    }
    // next combination in lexicographic order
    std::size_t i = m;
    while (i > 0 && comb[i - 1] == n - m + i) --i;
    if (i == 0) break;
    ++comb[i - 1];
    for (std::size_t j = i; j < m; ++j) comb[j] = comb[j - 1] + 1;
  }
  return best;
}

}  // namespace prunekit
