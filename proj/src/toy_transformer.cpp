#include "prunekit/toy_transformer.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/error.hpp"
#include "prunekit/kernels.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

constexpr std::size_t kD = ToyTransformer::kWidth;
constexpr std::size_t kV = static_cast<std::size_t>(ToyTransformer::kVocab);

std::vector<double> draw(SplitMix64& rng, std::size_t count, double scale) {
  std::vector<double> out(count);
  for (double& v : out) v = rng.uniform(-scale, scale);
  return out;
}

void rms_norm(std::span<const double> x, std::span<double> out) {
  const double ms = kernels::dot(x, x) / static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv;
}

void positional(std::size_t pos, std::span<double> out) {
  for (std::size_t i = 0; i < kD / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(kD));
    out[2 * i] = std::sin(static_cast<double>(pos) * freq);
    out[2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
  }
}

// In-place log-softmax; returns nothing, row is overwritten.
void log_softmax(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (double& v : row) v -= lz;
}

constexpr std::size_t tri(std::size_t pos) { return pos * (pos + 1) / 2; }

}  // namespace

ToyTransformer::ToyTransformer(std::uint64_t seed) : seed_(seed) {
  SplitMix64 rng(seed);
  const double sd = std::sqrt(3.0 / static_cast<double>(kD));
  const double sf = std::sqrt(3.0 / static_cast<double>(kFfn));
  embedding_ = draw(rng, kV * kD, std::sqrt(3.0));
  layers_.resize(kLayers);
  for (auto& layer : layers_) {
    layer.wq = draw(rng, kD * kD, 2.0 * sd);
    layer.wk = draw(rng, kD * kD, 2.0 * sd);
    layer.wv = draw(rng, kD * kD, sd);
    layer.wo = draw(rng, kD * kD, sd);
    layer.w1 = draw(rng, kFfn * kD, sd);
    layer.b1 = draw(rng, kFfn, 0.1);
    layer.w2 = draw(rng, kD * kFfn, sf);
    layer.b2 = draw(rng, kD, 0.1);
  }
  unembedding_ = draw(rng, kV * kD, 2.0 * sd);
  descriptor_.backend_id = "toy-transformer-v1-seed" + std::to_string(seed);
  descriptor_.provides_attention = true;
  descriptor_.max_sequence = kMaxSequence;
  descriptor_.concurrency_safe = true;
}

std::vector<int> ToyTransformer::encode(UnitView units, std::vector<std::size_t>* unit_end) {
  std::vector<int> tokens{kBos};
  if (unit_end) unit_end->clear();
  for (auto u : units) {
    for (unsigned char c : u) tokens.push_back(c);
    if (unit_end) unit_end->push_back(tokens.size());
  }
  return tokens;
}

ToyTransformer::ForwardOutput ToyTransformer::forward(std::span<const int> tokens, const PrefixCache* cache,
                                                      bool want_attention, PrefixCache* keep) const {
  const std::size_t T = tokens.size();
  if (T > kMaxSequence) {
    throw Error(Errc::kSequenceTooLong, "sequence of " + std::to_string(T) + " positions exceeds " +
                                            std::to_string(kMaxSequence));
  }
  std::size_t p = 0;
  if (cache != nullptr) {
    const std::size_t lim = std::min(T, cache->tokens_.size());
    while (p < lim && tokens[p] == cache->tokens_[p]) ++p;
    if (p > 0) reuses_.fetch_add(1, std::memory_order_relaxed);
  }
  const std::size_t fresh = T - p;
  fresh_.fetch_add(fresh, std::memory_order_relaxed);

  const std::size_t LH = kLayers * kHeads;
  std::vector<std::vector<double>> keys(kLayers, std::vector<double>(fresh * kD));
  std::vector<std::vector<double>> values(kLayers, std::vector<double>(fresh * kD));
  std::vector<std::vector<double>> attn(LH, std::vector<double>(tri(T) - tri(p)));
  std::vector<double> rows(fresh * kV);

  auto key_at = [&](std::size_t l, std::size_t s) -> const double* {
    return s < p ? cache->keys_[l].data() + s * kD : keys[l].data() + (s - p) * kD;
  };
  auto value_at = [&](std::size_t l, std::size_t s) -> const double* {
    return s < p ? cache->values_[l].data() + s * kD : values[l].data() + (s - p) * kD;
  };

  std::vector<double> h(kD), a(kD), q(kD), o(kD), proj(kD), ff(kFfn), scores;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
  for (std::size_t t = p; t < T; ++t) {
    const auto tok = static_cast<std::size_t>(tokens[t]);
    positional(t, h);
    kernels::axpy(1.0, std::span<const double>(embedding_).subspan(tok * kD, kD), h);
    for (std::size_t l = 0; l < kLayers; ++l) {
      const Layer& L = layers_[l];
      rms_norm(h, a);
      double* kt = keys[l].data() + (t - p) * kD;
      double* vt = values[l].data() + (t - p) * kD;
      kernels::matvec(L.wq, a, q);
      kernels::matvec(L.wk, a, std::span<double>(kt, kD));
      kernels::matvec(L.wv, a, std::span<double>(vt, kD));
      std::fill(o.begin(), o.end(), 0.0);
      scores.resize(t + 1);
      for (std::size_t hd = 0; hd < kHeads; ++hd) {
        const std::size_t off = hd * kHeadDim;
        std::span<const double> qh(q.data() + off, kHeadDim);
        double mx = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = kernels::dot(qh, std::span<const double>(key_at(l, s) + off, kHeadDim)) * inv_sqrt_dh;
          mx = std::max(mx, scores[s]);
        }
        double z = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - mx);
          z += scores[s];
        }
        double* arow = attn[l * kHeads + hd].data() + tri(t) - tri(p);
        std::span<double> oh(o.data() + off, kHeadDim);
        for (std::size_t s = 0; s <= t; ++s) {
          arow[s] = scores[s] / z;
          kernels::axpy(arow[s], std::span<const double>(value_at(l, s) + off, kHeadDim), oh);
        }
      }
      kernels::matvec(L.wo, o, proj);
      kernels::axpy(1.0, proj, h);
      rms_norm(h, a);
      kernels::matvec(L.w1, a, ff);
      for (std::size_t i = 0; i < kFfn; ++i) ff[i] = std::max(0.0, ff[i] + L.b1[i]);
      kernels::matvec(L.w2, ff, proj);
      kernels::axpy(1.0, proj, h);
      kernels::axpy(1.0, L.b2, h);
    }
    rms_norm(h, a);
    std::span<double> row(rows.data() + (t - p) * kV, kV);
    kernels::matvec(unembedding_, a, row);
    log_softmax(row);
  }

  auto row_at = [&](std::size_t pos) -> const double* {
    return pos < p ? cache->log_softmax_.data() + pos * kV : rows.data() + (pos - p) * kV;
  };
  auto attn_row_at = [&](std::size_t lh, std::size_t pos) -> const double* {
    return pos < p ? cache->attn_[lh].data() + tri(pos) : attn[lh].data() + tri(pos) - tri(p);
  };

  ForwardOutput out;
  out.logprobs.assign(T, 0.0);
  for (std::size_t t = 1; t < T; ++t) out.logprobs[t] = row_at(t - 1)[tokens[t]];

  if (want_attention) {
    AttentionTensor tensor(kLayers, kHeads, T);
    for (std::size_t l = 0; l < kLayers; ++l) {
      for (std::size_t hd = 0; hd < kHeads; ++hd) {
        for (std::size_t t = 0; t < T; ++t) {
          const double* src = attn_row_at(l * kHeads + hd, t);
          std::copy(src, src + t + 1, tensor.row(l, hd, t).begin());
        }
      }
    }
    out.attention = std::move(tensor);
  }

  if (keep != nullptr) {
    PrefixCache full;
    full.tokens_.assign(tokens.begin(), tokens.end());
    full.keys_.resize(kLayers);
    full.values_.resize(kLayers);
    for (std::size_t l = 0; l < kLayers; ++l) {
      full.keys_[l].reserve(T * kD);
      full.values_[l].reserve(T * kD);
      for (std::size_t s = 0; s < T; ++s) {
        full.keys_[l].insert(full.keys_[l].end(), key_at(l, s), key_at(l, s) + kD);
        full.values_[l].insert(full.values_[l].end(), value_at(l, s), value_at(l, s) + kD);
      }
    }
    full.attn_.resize(LH);
    for (std::size_t lh = 0; lh < LH; ++lh) {
      full.attn_[lh].reserve(tri(T));
      for (std::size_t s = 0; s < T; ++s) full.attn_[lh].insert(full.attn_[lh].end(), attn_row_at(lh, s), attn_row_at(lh, s) + s + 1);
    }
    full.log_softmax_.reserve(T * kV);
    for (std::size_t s = 0; s < T; ++s) full.log_softmax_.insert(full.log_softmax_.end(), row_at(s), row_at(s) + kV);
    *keep = std::move(full);
  }
  return out;
}

ToyTransformer::PrefixCache ToyTransformer::build_cache(std::span<const int> tokens) const {
  PrefixCache cache;
  forward(tokens, nullptr, false, &cache);
  return cache;
}

std::vector<double> ToyTransformer::sum_units(const std::vector<double>& byte_logprobs,
                                              const std::vector<std::size_t>& unit_end, std::size_t target_begin) {
  std::vector<double> out;
  out.reserve(unit_end.size() - target_begin);
  for (std::size_t u = target_begin; u < unit_end.size(); ++u) {
    const std::size_t begin = u == 0 ? 1 : unit_end[u - 1];
    double s = 0.0;
    for (std::size_t t = begin; t < unit_end[u]; ++t) s += byte_logprobs[t];
    out.push_back(s);
  }
  return out;
}

std::vector<double> ToyTransformer::unit_logprobs(UnitView units, std::size_t target_begin) const {
  if (target_begin > units.size()) throw Error(Errc::kSpanOutOfBounds, "target start beyond sequence");
  std::vector<std::size_t> ends;
  const auto tokens = encode(units, &ends);
  return sum_units(forward(tokens).logprobs, ends, target_begin);
}

AttentionTensor ToyTransformer::attention(UnitView units) const {
  std::vector<std::size_t> ends;
  const auto tokens = encode(units, &ends);
  const auto out = forward(tokens, nullptr, true);
  const AttentionTensor& bytes = *out.attention;
  const std::size_t U = units.size();
  std::vector<std::size_t> unit_of(tokens.size(), 0);
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t t = (u == 0 ? 1 : ends[u - 1]); t < ends[u]; ++t) unit_of[t] = u;
  }
  AttentionTensor result(kLayers, kHeads, U);
  for (std::size_t l = 0; l < kLayers; ++l) {
    for (std::size_t hd = 0; hd < kHeads; ++hd) {
      for (std::size_t u = 0; u < U; ++u) {
        const std::size_t begin = u == 0 ? 1 : ends[u - 1];
        const double inv_len = 1.0 / static_cast<double>(ends[u] - begin);
        auto dst = result.row(l, hd, u);
        for (std::size_t t = begin; t < ends[u]; ++t) {
          auto src = bytes.row(l, hd, t);
          const double scale = inv_len / (1.0 - src[0]);
          for (std::size_t s = 1; s <= t; ++s) dst[unit_of[s]] += src[s] * scale;
        }
      }
    }
  }
  return result;
}

namespace {

class ToySession final : public PrefixSession {
 public:
  ToySession(const ToyTransformer& lm, UnitView base) : lm_(lm), cache_(lm.build_cache(ToyTransformer::encode(base))) {}

  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override {
    if (target_begin > units.size()) throw Error(Errc::kSpanOutOfBounds, "target start beyond sequence");
    std::vector<std::size_t> ends;
    const auto tokens = ToyTransformer::encode(units, &ends);
    return ToyTransformer::sum_units(lm_.forward(tokens, &cache_).logprobs, ends, target_begin);
  }

 private:
  const ToyTransformer& lm_;
  ToyTransformer::PrefixCache cache_;
};

}  // namespace

std::unique_ptr<PrefixSession> ToyTransformer::open_session(UnitView base) const {
  return std::make_unique<ToySession>(*this, base);
}

}  // namespace prunekit
