#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prunekit/backend.hpp"
#include "prunekit/baselines.hpp"
#include "prunekit/core.hpp"

namespace prunekit {

struct FeatureMatrix {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> values;  // row-major

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  void append(const FeatureMatrix& other);
};

// feature[t][l * H + h] = mean over later positions i of A[l][h][i -> t];
// the final position (no later queries) gets a zero row.
FeatureMatrix extract_features(const AttentionTensor& attn, Span reasoning);

// Sample correlation. Zero variance in either argument yields 0, or
// ZeroVariance when strict.
double pearson(std::span<const double> x, std::span<const double> y, bool strict = false);

// First-stage L_del values of a recorded trace, ordered by reasoning index.
std::vector<double> first_stage_targets(const PruneTrace& trace);

struct SurrogateHyper {
  std::size_t hidden{16};
  double learning_rate{0.5};
  std::size_t epochs{500};
  std::uint64_t seed{0};
};

// x -> standardize -> W1 x + b1 -> relu -> w2 . h + b2.
//
// Flat parameter layout (also the JSON "weights" array):
//   [ input mean (D) | input scale (D) | W1 (hidden x D, row-major)
//     | b1 (hidden) | w2 (hidden) | b2 (1) ]
// Standardization entries are fixed from the training features; everything
// after them is trained.
class SurrogateModel {
 public:
  SurrogateModel() = default;
  static SurrogateModel initialize(const FeatureMatrix& train, std::size_t hidden, std::uint64_t seed);
  static SurrogateModel from_flat(std::size_t inputs, std::size_t hidden, std::vector<double> flat);

  std::size_t inputs() const noexcept { return inputs_; }
  std::size_t hidden() const noexcept { return hidden_; }
  const std::vector<double>& flat() const noexcept { return params_; }
  std::size_t trainable_offset() const noexcept { return 2 * inputs_; }

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const FeatureMatrix& features) const;

  // Pearson(predict(features), targets); when grad is given it receives
  // d r / d params over the full flat layout (standardization entries 0).
  double objective(const FeatureMatrix& features, std::span<const double> targets,
                   std::vector<double>* grad = nullptr) const;

  std::vector<double>& mutable_flat() noexcept { return params_; }

 private:
  std::size_t inputs_{0};
  std::size_t hidden_{0};
  std::vector<double> params_;
};

struct TrainingResult {
  SurrogateModel model;
  std::vector<double> curve;  // training correlation before each epoch, then final
};

// Full-batch gradient ascent on the pooled Pearson correlation.
TrainingResult train_surrogate(const FeatureMatrix& features, std::span<const double> targets,
                               const SurrogateHyper& hyper);

double eval_surrogate(const SurrogateModel& model, const FeatureMatrix& features, std::span<const double> targets);

}  // namespace prunekit
