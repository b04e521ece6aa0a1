#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prunekit/core.hpp"

namespace prunekit {

enum class Category { kSymbMath, kMetaDisc, kCoRef, kEntName, kVerbalMath, kGrammar };

std::string_view category_name(Category c) noexcept;
Category parse_category(std::string_view text);

struct AnnotationSet {
  std::string instance_id;
  std::vector<Category> categories;  // one label per reasoning unit
};

struct RetentionRow {
  KeepFraction rho;
  Category category;
  double retention;   // kept / total within the category
  std::size_t count;  // category tokens across all instances
};

enum class Averaging { kMicro, kMacro };

// Keep set of annotated item `item` at keep fraction `rho`.
using KeepProvider = std::function<KeepSet(std::size_t item, const KeepFraction& rho)>;

// Rows sorted by rho, then category name. Micro averaging pools tokens over
// instances; macro averages per-instance retention over instances that
// contain the category.
std::vector<RetentionRow> retention_curves(std::span<const AnnotationSet> annotations, const KeepProvider& keep_at,
                                           std::span<const KeepFraction> grid, Averaging avg = Averaging::kMicro);

// Traces are matched to annotations by instance id.
std::vector<RetentionRow> retention_curves(std::span<const PruneTrace> traces,
                                           const std::map<std::string, AnnotationSet>& annotations,
                                           std::span<const KeepFraction> grid, Averaging avg = Averaging::kMicro);

enum class HitMode { kDynamic, kFrozen, kRandom };

std::string_view hit_mode_name(HitMode m) noexcept;

// |top ∩ pruned| / |pruned|
double hit_at(std::span<const std::size_t> top, std::span<const std::size_t> pruned);

// The k safest (highest L_del) indices among `among`, ties to the lower index.
std::vector<std::size_t> top_safest(const std::map<std::size_t, double>& scores, std::span<const std::size_t> among,
                                    std::size_t k);

// Hit@|S| for the transition rho_prev = rho_curr + delta -> rho_curr, with
// S = K_prev \ K_curr. Empty S yields nullopt.
std::optional<double> dynamics_hit(const PruneTrace& trace, const KeepFraction& rho_curr, const KeepFraction& delta,
                                   HitMode mode);

struct DynamicsRow {
  KeepFraction rho_curr;
  HitMode mode;
  double hit;           // uniform mean over instances with non-empty S
  std::size_t instances;
};

std::vector<DynamicsRow> dynamics_curve(std::span<const PruneTrace> traces, std::span<const KeepFraction> grid,
                                        const KeepFraction& delta, std::span<const HitMode> modes);

struct CategoryShare {
  Category category;
  double fraction;
  std::size_t count;
};

// Share of every present category across all reasoning tokens, sorted by
// category name.
std::vector<CategoryShare> category_frequency(std::span<const AnnotationSet> annotations);

}  // namespace prunekit
