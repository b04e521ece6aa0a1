#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prunekit {

using UnitView = std::span<const std::string_view>;

struct BackendDescriptor {
  std::string backend_id;  // stable across runs; part of every cache key
  bool provides_attention{false};
  std::size_t max_sequence{0};
  bool concurrency_safe{true};
};

// Causal attention over T positions for every layer and head, stored
// [layer][head][query][key] row-major.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t tokens)
      : layers_(layers), heads_(heads), tokens_(tokens), values_(layers * heads * tokens * tokens, 0.0) {}

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t tokens() const noexcept { return tokens_; }

  double& at(std::size_t l, std::size_t h, std::size_t query, std::size_t key) noexcept {
    return values_[((l * heads_ + h) * tokens_ + query) * tokens_ + key];
  }
  double at(std::size_t l, std::size_t h, std::size_t query, std::size_t key) const noexcept {
    return values_[((l * heads_ + h) * tokens_ + query) * tokens_ + key];
  }
  // Row `query` of head (l, h); length tokens().
  std::span<const double> row(std::size_t l, std::size_t h, std::size_t query) const noexcept {
    return {values_.data() + ((l * heads_ + h) * tokens_ + query) * tokens_, tokens_};
  }
  std::span<double> row(std::size_t l, std::size_t h, std::size_t query) noexcept {
    return {values_.data() + ((l * heads_ + h) * tokens_ + query) * tokens_, tokens_};
  }

  // Max |row sum - 1| and max |entry above the diagonal|.
  double max_row_error() const noexcept;
  double max_acausal() const noexcept;

 private:
  std::size_t layers_{0};
  std::size_t heads_{0};
  std::size_t tokens_{0};
  std::vector<double> values_;
};

// Scores units[target_begin..] teacher-forced on everything before them.
class PrefixSession {
 public:
  virtual ~PrefixSession() = default;
  virtual std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const = 0;
};

class LikelihoodBackend {
 public:
  virtual ~LikelihoodBackend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  // Per-unit log-probabilities (nats) of units[target_begin..], each
  // conditioned on the gold prefix units[0..i).
  virtual std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const = 0;

  // Unit-level attention over the whole sequence. Throws Unsupported unless
  // descriptor().provides_attention.
  virtual AttentionTensor attention(UnitView units) const;

  // A session whose calls may reuse computation shared with `base`. The
  // default session forwards to unit_logprobs. The returned session is safe
  // for concurrent calls when the backend is.
  virtual std::unique_ptr<PrefixSession> open_session(UnitView base) const;
};

}  // namespace prunekit
