#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "prunekit/backend.hpp"
#include "prunekit/core.hpp"
#include "prunekit/ngram.hpp"
#include "prunekit/rng.hpp"

namespace prunekit::fixtures {

inline NgramModel abc_unigram() { return NgramModel::unigram({{"a", 0.5}, {"b", 0.25}, {"c", 0.125}}); }

inline Instance make_instance(std::string id, const std::vector<std::string>& q, const std::vector<std::string>& r,
                              const std::vector<std::string>& a) {
  Instance inst;
  inst.id = std::move(id);
  inst.question = make_units(q);
  inst.reasoning = make_units(r);
  inst.answer = make_units(a);
  return inst;
}

inline std::vector<std::string> random_tokens(SplitMix64& rng, std::size_t len, std::size_t vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < len; ++i) out.push_back("w" + std::to_string(rng.below(vocab)));
  return out;
}

// Instances over a small word vocabulary plus an n-gram model fitted on them.
struct NgramWorld {
  std::vector<Instance> instances;
  NgramModel model;
};

inline NgramWorld random_ngram_world(std::uint64_t seed, std::size_t count, std::size_t max_n, int order = 2,
                                     double alpha = 0.1, std::size_t vocab = 8) {
  SplitMix64 rng(seed);
  std::vector<Instance> instances;
  std::vector<std::vector<std::string>> corpus;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 1 + rng.below(max_n);
    auto q = random_tokens(rng, 1 + rng.below(4), vocab);
    auto r = random_tokens(rng, n, vocab);
    auto a = random_tokens(rng, 1 + rng.below(3), vocab);
    std::vector<std::string> seq = q;
    seq.insert(seq.end(), r.begin(), r.end());
    seq.insert(seq.end(), a.begin(), a.end());
    corpus.push_back(seq);
    instances.push_back(make_instance("inst-" + std::to_string(i), q, r, a));
  }
  return {std::move(instances), NgramModel::fit(corpus, order, alpha)};
}

// Forwards to another backend and counts calls.
class CountingBackend final : public LikelihoodBackend {
 public:
  explicit CountingBackend(const LikelihoodBackend& inner) : inner_(inner) {}
  const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override {
    ++calls_;
    return inner_.unit_logprobs(units, target_begin);
  }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  const LikelihoodBackend& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Causal, row-stochastic attention with random weights.
inline AttentionTensor random_attention(SplitMix64& rng, std::size_t layers, std::size_t heads, std::size_t tokens) {
  AttentionTensor attn(layers, heads, tokens);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tokens; ++i) {
        auto row = attn.row(l, h, i);
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) total += row[j] = rng.uniform() + 1e-3;
        for (std::size_t j = 0; j <= i; ++j) row[j] /= total;
      }
    }
  }
  return attn;
}

// Naive I(t): every layer, head and strictly later query.
inline std::vector<double> naive_h2o(const AttentionTensor& attn, std::size_t begin, std::size_t end) {
  std::vector<double> out;
  for (std::size_t t = begin; t < end; ++t) {
    double s = 0.0;
    for (std::size_t l = 0; l < attn.layers(); ++l)
      for (std::size_t h = 0; h < attn.heads(); ++h)
        for (std::size_t i = t + 1; i < attn.tokens(); ++i) s += attn.at(l, h, i, t);
    out.push_back(s);
  }
  return out;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prunekit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace prunekit::fixtures
