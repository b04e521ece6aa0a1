#include "prunekit/analysis.hpp"

#include <algorithm>
#include <array>

#include "prunekit/error.hpp"
#include "prunekit/pruning.hpp"

namespace prunekit {

namespace {

constexpr std::array<Category, 6> kByName{Category::kCoRef,    Category::kEntName,  Category::kGrammar,
                                          Category::kMetaDisc, Category::kSymbMath, Category::kVerbalMath};

constexpr std::size_t slot(Category c) noexcept { return static_cast<std::size_t>(c); }

}  // namespace

std::string_view category_name(Category c) noexcept {
  switch (c) {
    case Category::kSymbMath: return "SymbMath";
    case Category::kMetaDisc: return "MetaDisc";
    case Category::kCoRef: return "CoRef";
    case Category::kEntName: return "EntName";
    case Category::kVerbalMath: return "VerbalMath";
    case Category::kGrammar: return "Grammar";
  }
  return "?";
}

Category parse_category(std::string_view text) {
  for (Category c : kByName) {
    if (category_name(c) == text) return c;
  }
  throw Error(Errc::kValidationError, "unknown category '" + std::string(text) + "'");
}

std::vector<RetentionRow> retention_curves(std::span<const AnnotationSet> annotations, const KeepProvider& keep_at,
                                           std::span<const KeepFraction> grid, Averaging avg) {
  std::vector<KeepFraction> rhos(grid.begin(), grid.end());
  std::sort(rhos.begin(), rhos.end());

  std::array<std::size_t, 6> totals{};
  for (const auto& ann : annotations) {
    for (Category c : ann.categories) ++totals[slot(c)];
  }

  std::vector<RetentionRow> rows;
  for (const KeepFraction& rho : rhos) {
    std::array<double, 6> kept_sum{};     // micro: pooled kept tokens
    std::array<double, 6> frac_sum{};     // macro: sum of per-instance ratios
    std::array<std::size_t, 6> present{};
    for (std::size_t item = 0; item < annotations.size(); ++item) {
      const auto& cats = annotations[item].categories;
      const KeepSet keep = keep_at(item, rho);
      if (keep.n != cats.size()) {
        throw Error(Errc::kAnnotationMismatch, "instance '" + annotations[item].instance_id + "' has " +
                                                   std::to_string(cats.size()) + " labels for " +
                                                   std::to_string(keep.n) + " reasoning units");
      }
      std::array<std::size_t, 6> tot{};
      std::array<std::size_t, 6> kept{};
      for (std::size_t i = 0; i < cats.size(); ++i) ++tot[slot(cats[i])];
      for (std::size_t idx : keep.kept) ++kept[slot(cats[idx - 1])];
      for (std::size_t c = 0; c < 6; ++c) {
        kept_sum[c] += static_cast<double>(kept[c]);
        if (tot[c] > 0) {
          frac_sum[c] += static_cast<double>(kept[c]) / static_cast<double>(tot[c]);
          ++present[c];
        }
      }
    }
    for (Category c : kByName) {
      const std::size_t s = slot(c);
      if (totals[s] == 0) continue;
      const double r = avg == Averaging::kMicro ? kept_sum[s] / static_cast<double>(totals[s])
                                                : frac_sum[s] / static_cast<double>(present[s]);
      rows.push_back({rho, c, r, totals[s]});
    }
  }
  return rows;
}

std::vector<RetentionRow> retention_curves(std::span<const PruneTrace> traces,
                                           const std::map<std::string, AnnotationSet>& annotations,
                                           std::span<const KeepFraction> grid, Averaging avg) {
  std::vector<AnnotationSet> matched;
  matched.reserve(traces.size());
  for (const auto& tr : traces) {
    auto it = annotations.find(tr.instance_id);
    if (it == annotations.end()) {
      throw Error(Errc::kAnnotationMismatch, "no annotation for instance '" + tr.instance_id + "'");
    }
    if (it->second.categories.size() != tr.n) {
      throw Error(Errc::kAnnotationMismatch, "annotation length differs from trace for '" + tr.instance_id + "'");
    }
    matched.push_back(it->second);
  }
  return retention_curves(matched, [&](std::size_t item, const KeepFraction& rho) { return keep_set_at(traces[item], rho); },
                          grid, avg);
}

// ---------------------------------------------------------------------------

std::string_view hit_mode_name(HitMode m) noexcept {
  switch (m) {
    case HitMode::kDynamic: return "dynamic";
    case HitMode::kFrozen: return "frozen";
    case HitMode::kRandom: return "random";
  }
  return "?";
}

double hit_at(std::span<const std::size_t> top, std::span<const std::size_t> pruned) {
  if (pruned.empty()) throw Error(Errc::kEmptyInput, "Hit@|S| needs a non-empty pruned set");
  std::size_t hits = 0;
  for (std::size_t idx : pruned) {
    if (std::find(top.begin(), top.end(), idx) != top.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pruned.size());
}

std::vector<std::size_t> top_safest(const std::map<std::size_t, double>& scores, std::span<const std::size_t> among,
                                    std::size_t k) {
  // Same selection and tie rule as the greedy step, so DYNAMIC Hit@1 on
  // adjacent stages reproduces the recorded choice.
  std::vector<std::size_t> idx(among.begin(), among.end());
  std::sort(idx.begin(), idx.end());
  std::vector<double> s;
  s.reserve(idx.size());
  for (std::size_t i : idx) {
    auto it = scores.find(i);
    if (it == scores.end()) {
      throw Error(Errc::kMissingStepRecords, "no candidate score for index " + std::to_string(i));
    }
    s.push_back(it->second);
  }
  std::vector<std::size_t> out;
  for (std::size_t pos : select_removals(s, k)) out.push_back(idx[pos]);
  return out;
}

namespace {

const StepRecord* stage_with_remaining(const PruneTrace& trace, std::size_t remaining) {
  if (!trace.steps) return nullptr;
  std::size_t left = trace.n;
  for (const auto& rec : *trace.steps) {
    if (left == remaining) return &rec;
    left -= rec.removed.size();
  }
  return nullptr;
}

}  // namespace

std::optional<double> dynamics_hit(const PruneTrace& trace, const KeepFraction& rho_curr, const KeepFraction& delta,
                                   HitMode mode) {
  if (static_cast<__int128>(rho_curr.num()) * delta.den() + static_cast<__int128>(delta.num()) * rho_curr.den() >
      static_cast<__int128>(rho_curr.den()) * delta.den()) {
    throw Error(Errc::kValidationError, "rho_curr + delta exceeds 1");
  }
  const KeepFraction rho_prev = rho_curr + delta;
  const KeepSet prev = keep_set_at(trace, rho_prev);
  const KeepSet curr = keep_set_at(trace, rho_curr);
  std::vector<std::size_t> pruned;
  std::set_difference(prev.kept.begin(), prev.kept.end(), curr.kept.begin(), curr.kept.end(),
                      std::back_inserter(pruned));
  if (pruned.empty()) return std::nullopt;

  if (mode == HitMode::kRandom) {
    return static_cast<double>(pruned.size()) / static_cast<double>(prev.size());
  }
  const StepRecord* rec = mode == HitMode::kDynamic ? stage_with_remaining(trace, prev.size())
                                                   : stage_with_remaining(trace, trace.n);
  if (rec == nullptr) {
    throw Error(Errc::kMissingStepRecords, "trace '" + trace.instance_id + "' has no candidate scores for the " +
                                               (mode == HitMode::kDynamic ? "rho_prev" : "rho=1.0") + " stage");
  }
  const auto top = top_safest(rec->candidate_scores, prev.kept, pruned.size());
  return hit_at(top, pruned);
}

std::vector<DynamicsRow> dynamics_curve(std::span<const PruneTrace> traces, std::span<const KeepFraction> grid,
                                        const KeepFraction& delta, std::span<const HitMode> modes) {
  std::vector<KeepFraction> rhos(grid.begin(), grid.end());
  std::sort(rhos.begin(), rhos.end());
  std::vector<DynamicsRow> rows;
  for (const KeepFraction& rho : rhos) {
    if (static_cast<__int128>(rho.num()) * delta.den() + static_cast<__int128>(delta.num()) * rho.den() >
        static_cast<__int128>(rho.den()) * delta.den()) {
      continue;
    }
    for (HitMode mode : modes) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& tr : traces) {
        if (rho < tr.rho_min) continue;
        if (auto h = dynamics_hit(tr, rho, delta, mode)) {
          sum += *h;
          ++count;
        }
      }
      if (count > 0) rows.push_back({rho, mode, sum / static_cast<double>(count), count});
    }
  }
  return rows;
}

std::vector<CategoryShare> category_frequency(std::span<const AnnotationSet> annotations) {
  std::array<std::size_t, 6> counts{};
  std::size_t total = 0;
  for (const auto& ann : annotations) {
    for (Category c : ann.categories) {
      ++counts[slot(c)];
      ++total;
    }
  }
  if (total == 0) throw Error(Errc::kEmptyInput, "no annotated tokens");
  std::vector<CategoryShare> out;
  for (Category c : kByName) {
    if (counts[slot(c)] == 0) continue;
    out.push_back({c, static_cast<double>(counts[slot(c)]) / static_cast<double>(total), counts[slot(c)]});
  }
  return out;
}

}  // namespace prunekit
