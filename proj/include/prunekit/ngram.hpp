#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "prunekit/backend.hpp"

namespace prunekit {

// Additively smoothed n-gram model (order 1..3) over token units.
//
//   p(v | ctx)   = (c(ctx, v) + alpha) / (c(ctx) + alpha * (|V| + 1))
//   p(UNK | ctx) = alpha / (c(ctx) + alpha * (|V| + 1))
//
// Contexts never seen in training back off to the next lower order. Sequence
// starts are padded with a begin marker, so the first unit is scored against
// a (BOS...) context.
class NgramModel final : public LikelihoodBackend {
 public:
  static NgramModel fit(const std::vector<std::vector<std::string>>& corpus, int order, double alpha);

  // Context-free model with explicit probabilities; the leftover mass
  // 1 - sum(probs) is assigned to UNK.
  static NgramModel unigram(const std::map<std::string, double>& probs);

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return tokens_; }

  // p(token | the last order-1 units of context)
  double prob(UnitView context, std::string_view token) const;
  // Full conditional distribution over vocabulary() followed by UNK.
  std::vector<double> distribution(UnitView context) const;
  // Per-token conditional log-probs of seq (nats), scored from its start.
  std::vector<double> logprobs(UnitView seq) const;

  // Every context observed at the model's highest order, with leading
  // padding dropped (so each entry can be passed back to distribution()).
  std::vector<std::vector<std::string>> observed_contexts() const;

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override;

 private:
  struct Row {
    double total{0.0};  // includes unk
    double unk{0.0};
    std::unordered_map<int, double> counts;
  };

  static constexpr int kPad = -1;
  static constexpr int kUnk = -2;

  NgramModel(int order, double alpha) : order_(order), alpha_(alpha) {}
  int id_of(std::string_view token) const;
  static std::uint64_t context_key(const int* ids, int len) noexcept;
  double prob_ids(const int* context_ids, int context_len, int token) const;

  int order_;
  double alpha_;
  std::map<std::string, int, std::less<>> ids_;
  std::vector<std::string> tokens_;
  std::vector<std::unordered_map<std::uint64_t, Row>> tables_;  // tables_[k-1] has k-1 context ids
  BackendDescriptor descriptor_;
};

}  // namespace prunekit
