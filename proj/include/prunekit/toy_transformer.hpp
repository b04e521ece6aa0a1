#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prunekit/backend.hpp"

namespace prunekit {

// Untrained, deterministically seeded byte-level causal transformer.
//
// Vocabulary: bytes 0..255, BOS = 256, SEP = 257. Units are encoded as their
// UTF-8 bytes after a single BOS; a unit's log-probability is the sum over
// its bytes.
//
// Weights are drawn from SplitMix64(seed) as uniform values in [-s, s], row
// major, in this order:
//   embedding [V x d]                                  s = sqrt(3)
//   per layer: Wq, Wk [d x d]                          s = 2 * sqrt(3 / d)
//              Wv, Wo [d x d]                          s = sqrt(3 / d)
//              W1 [f x d]                              s = sqrt(3 / d)
//              b1 [f]                                  s = 0.1
//              W2 [d x f]                              s = sqrt(3 / f)
//              b2 [d]                                  s = 0.1
//   unembedding [V x d]                                s = 2 * sqrt(3 / d)
// Positions use the fixed sinusoidal encoding; norms are unparameterized RMS
// norms with eps 1e-6.
class ToyTransformer final : public LikelihoodBackend {
 public:
  static constexpr int kVocab = 258;
  static constexpr int kBos = 256;
  static constexpr int kSep = 257;
  static constexpr std::size_t kLayers = 2;
  static constexpr std::size_t kHeads = 2;
  static constexpr std::size_t kWidth = 32;
  static constexpr std::size_t kHeadDim = kWidth / kHeads;
  static constexpr std::size_t kFfn = 64;
  static constexpr std::size_t kMaxSequence = 1024;

  // Per-position state of an evaluated token sequence: keys, values,
  // attention rows and next-token log-softmax rows.
  class PrefixCache {
   public:
    std::span<const int> tokens() const noexcept { return tokens_; }
    std::size_t size() const noexcept { return tokens_.size(); }

   private:
    friend class ToyTransformer;
    std::vector<int> tokens_;
    std::vector<std::vector<double>> keys_;    // [layer][pos * d]
    std::vector<std::vector<double>> values_;  // [layer][pos * d]
    std::vector<std::vector<double>> attn_;    // [layer * H + head][tri(pos) + s]
    std::vector<double> log_softmax_;          // [pos * V]
  };

  struct ForwardOutput {
    // logprobs[t] = log p(tokens[t] | tokens[<t]); logprobs[0] = 0.
    std::vector<double> logprobs;
    // Position-level attention (query, key over all T positions).
    std::optional<AttentionTensor> attention;
  };

  explicit ToyTransformer(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  // Evaluates tokens, reusing the longest common prefix with `cache`.
  // Exactly size() - reused positions are computed. When `keep` is given it
  // receives the full per-position state of this sequence.
  ForwardOutput forward(std::span<const int> tokens, const PrefixCache* cache = nullptr,
                        bool want_attention = false, PrefixCache* keep = nullptr) const;

  PrefixCache build_cache(std::span<const int> tokens) const;

  // BOS followed by the bytes of every unit; `unit_end[i]` is the position
  // one past unit i's last byte.
  static std::vector<int> encode(UnitView units, std::vector<std::size_t>* unit_end = nullptr);

  std::uint64_t fresh_positions() const noexcept { return fresh_.load(); }
  std::uint64_t cache_reuses() const noexcept { return reuses_.load(); }
  void reset_counters() const noexcept {
    fresh_ = 0;
    reuses_ = 0;
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override;
  // Unit-level attention: each query unit's row is the mean over its bytes of
  // the BOS-excluded, renormalized byte attention summed per key unit.
  AttentionTensor attention(UnitView units) const override;
  std::unique_ptr<PrefixSession> open_session(UnitView base) const override;

  // Sums per-byte log-probs into units[target_begin..].
  static std::vector<double> sum_units(const std::vector<double>& byte_logprobs,
                                       const std::vector<std::size_t>& unit_end, std::size_t target_begin);

 private:
  struct Layer {
    std::vector<double> wq, wk, wv, wo, w1, b1, w2, b2;
  };

  std::uint64_t seed_;
  std::vector<double> embedding_;
  std::vector<Layer> layers_;
  std::vector<double> unembedding_;
  BackendDescriptor descriptor_;
  mutable std::atomic<std::uint64_t> fresh_{0};
  mutable std::atomic<std::uint64_t> reuses_{0};
};

}  // namespace prunekit
