#include "prunekit/core.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>

#include "prunekit/error.hpp"

namespace prunekit {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kEmptyReasoning: return "EmptyReasoning";
    case Errc::kEmptyAnswer: return "EmptyAnswer";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kRhoBelowTrace: return "RhoBelowTrace";
    case Errc::kInvalidKeepFraction: return "InvalidKeepFraction";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kBackendFailure: return "BackendFailure";
    case Errc::kTimeout: return "Timeout";
    case Errc::kAuthFailure: return "AuthFailure";
    case Errc::kAlignmentGap: return "AlignmentGap";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kInvalidOrder: return "InvalidOrder";
    case Errc::kSequenceTooLong: return "SequenceTooLong";
    case Errc::kUnsupported: return "Unsupported";
    case Errc::kDegenerateAnswer: return "DegenerateAnswer";
    case Errc::kUnsupportedTrace: return "UnsupportedTrace";
    case Errc::kTooLarge: return "TooLarge";
    case Errc::kSpanOutOfBounds: return "SpanOutOfBounds";
    case Errc::kMissingScores: return "MissingScores";
    case Errc::kAnnotationMismatch: return "AnnotationMismatch";
    case Errc::kMissingStepRecords: return "MissingStepRecords";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kZeroVariance: return "ZeroVariance";
    case Errc::kDegenerateTargets: return "DegenerateTargets";
    case Errc::kParseError: return "ParseError";
    case Errc::kValidationError: return "ValidationError";
    case Errc::kNoGenerationEndpoint: return "NoGenerationEndpoint";
    case Errc::kTraceMissing: return "TraceMissing";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kIoError: return "IoError";
  }
  return "Unknown";
}

Units make_units(const std::vector<std::string>& texts) {
  Units out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({texts[i], i + 1});
  return out;
}

std::vector<std::string_view> unit_texts(const Units& units) {
  std::vector<std::string_view> out;
  out.reserve(units.size());
  for (const auto& u : units) out.emplace_back(u.text);
  return out;
}

std::string detokenize(const Units& units) {
  std::string out;
  for (const auto& u : units) out += u.text;
  return out;
}

// ---------------------------------------------------------------------------
// KeepFraction

KeepFraction::KeepFraction(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num <= 0 || num > den) {
    throw Error(Errc::kInvalidKeepFraction,
                "keep fraction must lie in (0,1], got " + std::to_string(num) + "/" + std::to_string(den));
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || s.front() == '-' || ec != std::errc() || p != s.data() + s.size()) {
    throw Error(Errc::kInvalidKeepFraction, "cannot parse keep fraction '" + std::string(whole) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

KeepFraction KeepFraction::parse(std::string_view text) {
  const std::string_view s = trim(text);
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    return KeepFraction(parse_int(trim(s.substr(0, slash)), text), parse_int(trim(s.substr(slash + 1)), text));
  }
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return KeepFraction(parse_int(s, text), 1);
  const std::string_view int_part = s.substr(0, dot);
  const std::string_view frac_part = s.substr(dot + 1);
  if (frac_part.size() > 15) throw Error(Errc::kInvalidKeepFraction, "too many decimals in '" + std::string(text) + "'");
  std::int64_t den = 1;
  for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
  const std::int64_t ip = int_part.empty() ? 0 : parse_int(int_part, text);
  const std::int64_t fp = frac_part.empty() ? 0 : parse_int(frac_part, text);
  return KeepFraction(ip * den + fp, den);
}

std::size_t KeepFraction::retained(std::size_t n) const noexcept {
  const auto prod = static_cast<__int128>(num_) * static_cast<__int128>(n);
  return static_cast<std::size_t>((prod + den_ - 1) / den_);
}

std::string KeepFraction::str() const {
  std::int64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) { d /= 2; ++twos; }
  while (d % 5 == 0) { d /= 5; ++fives; }
  if (d != 1) return std::to_string(num_) + "/" + std::to_string(den_);
  if (num_ == den_) return "1.0";
  const int digits = std::max(twos, fives);
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  const std::int64_t scaled = num_ * (scale / den_);
  std::string frac = std::to_string(scaled);
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  return "0." + frac;
}

KeepFraction operator+(const KeepFraction& a, const KeepFraction& b) {
  return KeepFraction(a.num() * b.den() + b.num() * a.den(), a.den() * b.den());
}

std::vector<KeepFraction> default_grid() {
  std::vector<KeepFraction> grid;
  for (int i = 1; i <= 10; ++i) grid.emplace_back(i, 10);
  return grid;
}

std::vector<KeepFraction> parse_grid(std::string_view text) {
  std::vector<KeepFraction> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (!trim(piece).empty()) grid.push_back(KeepFraction::parse(piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) throw Error(Errc::kInvalidKeepFraction, "empty keep-fraction grid");
  return grid;
}

bool KeepSet::contains(std::size_t index) const {
  return std::binary_search(kept.begin(), kept.end(), index);
}

std::string_view objective_name(Objective obj) noexcept {
  return obj == Objective::kJoint ? "joint" : "ans";
}

Objective parse_objective(std::string_view text) {
  if (text == "joint" || text == "JOINT") return Objective::kJoint;
  if (text == "ans" || text == "ANS") return Objective::kAns;
  throw Error(Errc::kConfigError, "unknown objective '" + std::string(text) + "'");
}

std::size_t PruneTrace::removed_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(ranks.begin(), ranks.end(), [](const auto& r) { return r.has_value(); }));
}

std::vector<std::size_t> PruneTrace::removal_order() const {
  std::vector<std::size_t> order(removed_count(), 0);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i]) {
      const std::size_t r = *ranks[i];
      if (r == 0 || r > order.size() || order[r - 1] != 0) {
        throw Error(Errc::kValidationError, "trace '" + instance_id + "' ranks are not consecutive 1..T");
      }
      order[r - 1] = i + 1;
    }
  }
  return order;
}

// ---------------------------------------------------------------------------

Instance validate_instance(const Instance& inst) {
  if (inst.reasoning.empty()) throw Error(Errc::kEmptyReasoning, "instance '" + inst.id + "' has no reasoning units");
  if (inst.answer.empty()) throw Error(Errc::kEmptyAnswer, "instance '" + inst.id + "' has no answer units");
  const auto check = [&](const Units& seq, std::string_view name) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i].text.empty() || seq[i].index != i + 1) {
        throw Error(Errc::kValidationError,
                    "instance '" + inst.id + "' " + std::string(name) + " unit " + std::to_string(i + 1) +
                        " is empty or misindexed");
      }
    }
  };
  check(inst.question, "question");
  check(inst.reasoning, "reasoning");
  check(inst.answer, "answer");
  return inst;
}

void validate_dataset(std::span<const Instance> dataset) {
  std::set<std::string_view> seen;
  for (const auto& inst : dataset) {
    validate_instance(inst);
    if (!seen.insert(inst.id).second) throw Error(Errc::kDuplicateId, "duplicate instance id '" + inst.id + "'");
  }
}

KeepSet keep_set_at(const PruneTrace& trace, const KeepFraction& rho) {
  if (rho < trace.rho_min) {
    throw Error(Errc::kRhoBelowTrace, "rho " + rho.str() + " is below trace rho_min " + trace.rho_min.str());
  }
  const std::size_t m = rho.retained(trace.n);
  const std::size_t drop = trace.n - m;
  if (drop > trace.removed_count()) {
    throw Error(Errc::kRhoBelowTrace, "trace '" + trace.instance_id + "' has only " +
                                          std::to_string(trace.removed_count()) + " removals");
  }
  KeepSet keep{{}, trace.n};
  keep.kept.reserve(m);
  for (std::size_t i = 0; i < trace.n; ++i) {
    if (!trace.ranks[i] || *trace.ranks[i] > drop) keep.kept.push_back(i + 1);
  }
  return keep;
}

Units apply_keep(const Units& reasoning, const KeepSet& keep) {
  if (keep.n != reasoning.size()) {
    throw Error(Errc::kLengthMismatch, "keep set covers " + std::to_string(keep.n) + " units, reasoning has " +
                                           std::to_string(reasoning.size()));
  }
  Units out;
  out.reserve(keep.kept.size());
  for (std::size_t idx : keep.kept) {
    if (idx == 0 || idx > reasoning.size()) throw Error(Errc::kLengthMismatch, "keep index out of range");
    out.push_back(reasoning[idx - 1]);
  }
  return out;
}

KeepSet full_keep(std::size_t n) {
  KeepSet k{std::vector<std::size_t>(n), n};
  std::iota(k.kept.begin(), k.kept.end(), std::size_t{1});
  return k;
}

}  // namespace prunekit
