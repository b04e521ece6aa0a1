#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "prunekit/backend.hpp"
#include "prunekit/core.hpp"
#include "prunekit/digest.hpp"

namespace prunekit {

struct ScoreResult {
  double total{0.0};              // nats, summed over target units
  std::vector<double> per_token;  // may be empty for totals loaded from disk
};

// JOINT: log P(R_K, A | Q). ANS: log P(A | Q, R_K). Teacher-forced on the gold
// prefix, summed over target units.
ScoreResult objective_score(const LikelihoodBackend& backend, Objective obj, const Units& question,
                            const Units& reasoning_kept, const Units& answer);

// log P(target | context)
ScoreResult conditional_score(const LikelihoodBackend& backend, const Units& context, const Units& target);

// -log p(r_t | Q, r_<t) for every reasoning unit, teacher-forced on Q.R.A.
std::vector<double> token_surprisals(const LikelihoodBackend& backend, const Units& question, const Units& reasoning,
                                     const Units& answer);

struct CacheKey {
  Digest digest{};
  bool operator==(const CacheKey&) const = default;
};

CacheKey make_cache_key(std::string_view backend_id, Objective obj, UnitView question, UnitView reasoning_kept,
                        UnitView answer);

// Thread-safe memo of objective scores. Inserts are idempotent
// (last write wins). When attached to a file, every insert is appended as a
// "<hex digest> <hex-float total>" line and load() restores totals.
class ScoreCache {
 public:
  explicit ScoreCache(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const noexcept { return enabled_; }
  std::optional<ScoreResult> find(const CacheKey& key) const;
  void insert(const CacheKey& key, const ScoreResult& result);

  std::size_t load(const std::filesystem::path& path);
  void attach_file(const std::filesystem::path& path);

  std::uint64_t hits() const noexcept { return hits_.load(); }
  std::uint64_t misses() const noexcept { return misses_.load(); }
  std::size_t size() const;

 private:
  struct KeyHash {
    std::size_t operator()(const CacheKey& k) const noexcept {
      std::size_t h = 0;
      for (int i = 0; i < 8; ++i) h = (h << 8) | k.digest[static_cast<std::size_t>(i)];
      return h;
    }
  };

  bool enabled_;
  mutable std::shared_mutex mu_;
  std::unordered_map<CacheKey, ScoreResult, KeyHash> entries_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
  std::mutex file_mu_;
  std::ofstream file_;
};

// objective_score behind the cache; a null or disabled cache passes through.
ScoreResult cached_score(ScoreCache* cache, const LikelihoodBackend& backend, Objective obj, const Units& question,
                         const Units& reasoning_kept, const Units& answer);

// Post-deletion objective L_del for every index in `kept` (sorted 1-based
// reasoning indices): scores[j] = L(Q, R_{kept \ {kept[j]}}, A). Candidates
// share one prefix session and are evaluated with up to `parallelism`
// workers; results are index-keyed so completion order is irrelevant.
std::vector<double> deletion_scores(const LikelihoodBackend& backend, Objective obj, const Instance& inst,
                                    std::span<const std::size_t> kept, std::size_t parallelism = 1,
                                    ScoreCache* cache = nullptr);

}  // namespace prunekit
