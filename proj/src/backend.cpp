#include "prunekit/backend.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/error.hpp"

namespace prunekit {

double AttentionTensor::max_row_error() const noexcept {
  double worst = 0.0;
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t q = 0; q < tokens_; ++q) {
        double s = 0.0;
        for (double v : row(l, h, q)) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
  }
  return worst;
}

double AttentionTensor::max_acausal() const noexcept {
  double worst = 0.0;
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t q = 0; q < tokens_; ++q) {
        for (std::size_t k = q + 1; k < tokens_; ++k) worst = std::max(worst, std::abs(at(l, h, q, k)));
      }
    }
  }
  return worst;
}

AttentionTensor LikelihoodBackend::attention(UnitView) const {
  throw Error(Errc::kUnsupported, "backend '" + descriptor().backend_id + "' does not expose attention");
}

namespace {

class ForwardingSession final : public PrefixSession {
 public:
  explicit ForwardingSession(const LikelihoodBackend& backend) : backend_(backend) {}
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override {
    return backend_.unit_logprobs(units, target_begin);
  }

 private:
  const LikelihoodBackend& backend_;
};

}  // namespace

std::unique_ptr<PrefixSession> LikelihoodBackend::open_session(UnitView) const {
  return std::make_unique<ForwardingSession>(*this);
}

}  // namespace prunekit
