#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prunekit {

struct TokenUnit {
  std::string text;     // surface form, whitespace included
  std::size_t index{};  // 1-based within its sequence

  bool operator==(const TokenUnit&) const = default;
};

using Units = std::vector<TokenUnit>;

// Builds 1-based units from raw strings.
Units make_units(const std::vector<std::string>& texts);
std::vector<std::string_view> unit_texts(const Units& units);
std::string detokenize(const Units& units);

struct Instance {
  std::string id;
  Units question;
  Units reasoning;
  Units answer;
  std::map<std::string, std::string> meta;

  std::size_t n() const noexcept { return reasoning.size(); }
};

// Exact rational keep fraction in (0, 1]. Parsed from decimal ("0.35") or
// ratio ("2/3") text so that ceil(rho * n) never depends on floating point.
class KeepFraction {
 public:
  KeepFraction(std::int64_t num, std::int64_t den);
  static KeepFraction parse(std::string_view text);
  static KeepFraction one() { return KeepFraction(1, 1); }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  // m = ceil(rho * n)
  std::size_t retained(std::size_t n) const noexcept;

  // Canonical text: shortest decimal when the denominator divides a power of
  // ten, "p/q" otherwise.
  std::string str() const;

  friend bool operator==(const KeepFraction& a, const KeepFraction& b) noexcept {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend auto operator<=>(const KeepFraction& a, const KeepFraction& b) noexcept {
    return static_cast<__int128>(a.num_) * b.den_ <=> static_cast<__int128>(b.num_) * a.den_;
  }

 private:
  std::int64_t num_;
  std::int64_t den_;
};

KeepFraction operator+(const KeepFraction& a, const KeepFraction& b);

// {0.1, 0.2, ..., 1.0}
std::vector<KeepFraction> default_grid();
std::vector<KeepFraction> parse_grid(std::string_view comma_separated);

struct KeepSet {
  std::vector<std::size_t> kept;  // sorted 1-based indices
  std::size_t n{};

  std::size_t size() const noexcept { return kept.size(); }
  bool contains(std::size_t index) const;
  bool operator==(const KeepSet&) const = default;
};

enum class Objective { kJoint, kAns };

std::string_view objective_name(Objective obj) noexcept;
Objective parse_objective(std::string_view text);

struct StepRecord {
  std::size_t step{};                          // 1-based stage number
  std::map<std::size_t, double> candidate_scores;  // remaining index -> L_del (nats)
  std::vector<std::size_t> removed;            // in rank order
};

struct PruneTrace {
  std::string instance_id;
  Objective objective{Objective::kJoint};
  std::size_t n{};
  std::vector<std::optional<std::size_t>> ranks;  // nullopt = never removed
  KeepFraction rho_min{KeepFraction::one()};
  std::optional<std::vector<StepRecord>> steps;
  // Set on traces interrupted by a backend failure: the next stage to run.
  std::optional<std::size_t> resume_at_step;

  std::size_t removed_count() const noexcept;
  // Indices in removal order (rank 1 first).
  std::vector<std::size_t> removal_order() const;
};

Instance validate_instance(const Instance& inst);
// Validates every instance and the uniqueness of ids.
void validate_dataset(std::span<const Instance> dataset);

KeepSet keep_set_at(const PruneTrace& trace, const KeepFraction& rho);
Units apply_keep(const Units& reasoning, const KeepSet& keep);
KeepSet full_keep(std::size_t n);

}  // namespace prunekit
