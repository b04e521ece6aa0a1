#include "prunekit/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/error.hpp"
#include "prunekit/kernels.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

void FeatureMatrix::append(const FeatureMatrix& other) {
  if (rows == 0 && cols == 0) cols = other.cols;
  if (other.cols != cols) throw Error(Errc::kLengthMismatch, "feature matrices differ in column count");
  values.insert(values.end(), other.values.begin(), other.values.end());
  rows += other.rows;
}

FeatureMatrix extract_features(const AttentionTensor& attn, Span reasoning) {
  const std::size_t T = attn.tokens();
  if (reasoning.begin > reasoning.end || reasoning.end > T) {
    throw Error(Errc::kSpanOutOfBounds, "reasoning span exceeds " + std::to_string(T) + " attended positions");
  }
  const std::size_t H = attn.heads();
  FeatureMatrix fm;
  fm.rows = reasoning.size();
  fm.cols = attn.layers() * H;
  fm.values.assign(fm.rows * fm.cols, 0.0);
  std::vector<double> received(T);
  for (std::size_t l = 0; l < attn.layers(); ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      std::fill(received.begin(), received.end(), 0.0);
      for (std::size_t i = 1; i < T; ++i) kernels::axpy(1.0, attn.row(l, h, i).first(i), std::span(received).first(i));
      for (std::size_t t = reasoning.begin; t < reasoning.end; ++t) {
        const std::size_t later = T - 1 - t;
        fm.values[(t - reasoning.begin) * fm.cols + l * H + h] = later == 0 ? 0.0 : received[t] / static_cast<double>(later);
      }
    }
  }
  return fm;
}

double pearson(std::span<const double> x, std::span<const double> y, bool strict) {
  if (x.size() != y.size()) throw Error(Errc::kLengthMismatch, "pearson arguments differ in length");
  if (x.size() < 2) throw Error(Errc::kLengthMismatch, "pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    if (strict) throw Error(Errc::kZeroVariance, "pearson argument has zero variance");
    return 0.0;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> first_stage_targets(const PruneTrace& trace) {
  if (!trace.steps || trace.steps->empty()) {
    throw Error(Errc::kMissingStepRecords, "trace '" + trace.instance_id + "' has no recorded stages");
  }
  const auto& first = trace.steps->front().candidate_scores;
  if (first.size() != trace.n) {
    throw Error(Errc::kMissingStepRecords, "first stage of '" + trace.instance_id + "' does not cover every token");
  }
  std::vector<double> out;
  out.reserve(trace.n);
  for (const auto& [idx, score] : first) out.push_back(score);
  return out;
}

// ---------------------------------------------------------------------------

SurrogateModel SurrogateModel::initialize(const FeatureMatrix& train, std::size_t hidden, std::uint64_t seed) {
  if (hidden == 0) throw Error(Errc::kConfigError, "hidden width must be positive");
  SurrogateModel m;
  m.inputs_ = train.cols;
  m.hidden_ = hidden;
  const std::size_t D = train.cols;
  m.params_.assign(2 * D + hidden * D + 2 * hidden + 1, 0.0);
  for (std::size_t c = 0; c < D; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < train.rows; ++r) mean += train.values[r * D + c];
    mean /= std::max<double>(1.0, static_cast<double>(train.rows));
    double var = 0.0;
    for (std::size_t r = 0; r < train.rows; ++r) var += std::pow(train.values[r * D + c] - mean, 2);
    var /= std::max<double>(1.0, static_cast<double>(train.rows));
    m.params_[c] = mean;
    m.params_[D + c] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  SplitMix64 rng(seed);
  double* w1 = m.params_.data() + 2 * D;
  const double s1 = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(D, 1)));
  for (std::size_t i = 0; i < hidden * D; ++i) w1[i] = rng.uniform(-s1, s1);
  double* b1 = w1 + hidden * D;
  for (std::size_t i = 0; i < hidden; ++i) b1[i] = rng.uniform(-0.1, 0.1);
  double* w2 = b1 + hidden;
  const double s2 = std::sqrt(3.0 / static_cast<double>(hidden));
  for (std::size_t i = 0; i < hidden; ++i) w2[i] = rng.uniform(-s2, s2);
  return m;
}

SurrogateModel SurrogateModel::from_flat(std::size_t inputs, std::size_t hidden, std::vector<double> flat) {
  if (flat.size() != 2 * inputs + hidden * inputs + 2 * hidden + 1) {
    throw Error(Errc::kLengthMismatch, "weight array has " + std::to_string(flat.size()) + " entries for a " +
                                           std::to_string(inputs) + "x" + std::to_string(hidden) + " model");
  }
  SurrogateModel m;
  m.inputs_ = inputs;
  m.hidden_ = hidden;
  m.params_ = std::move(flat);
  return m;
}

double SurrogateModel::predict(std::span<const double> x) const {
  if (x.size() != inputs_) throw Error(Errc::kLengthMismatch, "feature row width differs from model inputs");
  const std::size_t D = inputs_;
  std::vector<double> xs(D), z(hidden_);
  for (std::size_t c = 0; c < D; ++c) xs[c] = (x[c] - params_[c]) * params_[D + c];
  const double* w1 = params_.data() + 2 * D;
  const double* b1 = w1 + hidden_ * D;
  const double* w2 = b1 + hidden_;
  kernels::matvec(std::span<const double>(w1, hidden_ * D), xs, z);
  for (std::size_t j = 0; j < hidden_; ++j) z[j] = std::max(0.0, z[j] + b1[j]);
  return kernels::dot(std::span<const double>(w2, hidden_), z) + w2[hidden_];
}

std::vector<double> SurrogateModel::predict(const FeatureMatrix& features) const {
  std::vector<double> out(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) out[r] = predict(features.row(r));
  return out;
}

double SurrogateModel::objective(const FeatureMatrix& features, std::span<const double> targets,
                                 std::vector<double>* grad) const {
  if (features.rows != targets.size()) throw Error(Errc::kLengthMismatch, "features and targets differ in rows");
  if (features.cols != inputs_) throw Error(Errc::kLengthMismatch, "feature width differs from model inputs");
  const std::size_t N = features.rows, D = inputs_, H = hidden_;
  const double* w1 = params_.data() + 2 * D;
  const double* b1 = w1 + H * D;
  const double* w2 = b1 + H;

  std::vector<double> xs(N * D), z(N * H), preds(N);
  for (std::size_t r = 0; r < N; ++r) {
    auto x = features.row(r);
    std::span<double> xr(xs.data() + r * D, D), zr(z.data() + r * H, H);
    for (std::size_t c = 0; c < D; ++c) xr[c] = (x[c] - params_[c]) * params_[D + c];
    kernels::matvec(std::span<const double>(w1, H * D), xr, zr);
    for (std::size_t j = 0; j < H; ++j) zr[j] += b1[j];
    double p = w2[H];
    for (std::size_t j = 0; j < H; ++j) p += w2[j] * std::max(0.0, zr[j]);
    preds[r] = p;
  }
  const double r = pearson(preds, targets);
  if (grad == nullptr) return r;

  grad->assign(params_.size(), 0.0);
  const double n = static_cast<double>(N);
  double mp = 0.0, my = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    mp += preds[i];
    my += targets[i];
  }
  mp /= n;
  my /= n;
  double B = 0.0, C = 0.0, A = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    B += (preds[i] - mp) * (preds[i] - mp);
    C += (targets[i] - my) * (targets[i] - my);
    A += (preds[i] - mp) * (targets[i] - my);
  }
  if (B == 0.0 || C == 0.0) return r;
  const double root = std::sqrt(B * C);

  double* gw1 = grad->data() + 2 * D;
  double* gb1 = gw1 + H * D;
  double* gw2 = gb1 + H;
  std::vector<double> dz(H);
  for (std::size_t i = 0; i < N; ++i) {
    // d r / d p_i
    const double g = (targets[i] - my) / root - A * (preds[i] - mp) / (B * root);
    const double* zr = z.data() + i * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double active = zr[j] > 0.0 ? 1.0 : 0.0;
      gw2[j] += g * std::max(0.0, zr[j]);
      dz[j] = g * w2[j] * active;
      gb1[j] += dz[j];
      kernels::axpy(dz[j], std::span<const double>(xs.data() + i * D, D), std::span<double>(gw1 + j * D, D));
    }
    gw2[H] += g;
  }
  return r;
}

TrainingResult train_surrogate(const FeatureMatrix& features, std::span<const double> targets,
                               const SurrogateHyper& hyper) {
  if (features.rows < 2) throw Error(Errc::kLengthMismatch, "training needs at least two rows");
  if (features.rows != targets.size()) throw Error(Errc::kLengthMismatch, "features and targets differ in rows");
  for (double t : targets) {
    if (!std::isfinite(t)) throw Error(Errc::kValidationError, "targets must be finite");
  }
  if (std::all_of(targets.begin(), targets.end(), [&](double t) { return t == targets[0]; })) {
    throw Error(Errc::kDegenerateTargets, "all training targets are equal");
  }
  TrainingResult out{SurrogateModel::initialize(features, hyper.hidden, hyper.seed), {}};
  std::vector<double> grad;
  auto& params = out.model.mutable_flat();
  const std::size_t first = out.model.trainable_offset();
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    out.curve.push_back(out.model.objective(features, targets, &grad));
    for (std::size_t k = first; k < params.size(); ++k) params[k] += hyper.learning_rate * grad[k];
  }
  out.curve.push_back(out.model.objective(features, targets));
  return out;
}

double eval_surrogate(const SurrogateModel& model, const FeatureMatrix& features, std::span<const double> targets) {
  return pearson(model.predict(features), targets);
}

}  // namespace prunekit
