#include "prunekit/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, 16);
  return std::string(buf, p);
}

}  // namespace

std::uint64_t NgramModel::context_key(const int* ids, int len) noexcept {
  std::uint64_t key = static_cast<std::uint64_t>(len);
  for (int i = 0; i < len; ++i) key |= static_cast<std::uint64_t>(ids[i] + 3) << (4 + 30 * i);
  return key;
}

int NgramModel::id_of(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

NgramModel NgramModel::fit(const std::vector<std::vector<std::string>>& corpus, int order, double alpha) {
  if (order < 1 || order > 3) throw Error(Errc::kInvalidOrder, "n-gram order must be 1, 2 or 3, got " + std::to_string(order));
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::kConfigError, "smoothing alpha must be finite and >= 0");
  std::size_t units = 0;
  for (const auto& seq : corpus) units += seq.size();
  if (units == 0) throw Error(Errc::kEmptyCorpus, "n-gram corpus has no units");

  NgramModel model(order, alpha);
  model.tables_.resize(static_cast<std::size_t>(order));
  std::uint64_t h = fnv1a64("ngram");
  for (const auto& seq : corpus) {
    for (const auto& tok : seq) {
      if (model.ids_.find(tok) == model.ids_.end()) {
        model.ids_.emplace(tok, static_cast<int>(model.tokens_.size()));
        model.tokens_.push_back(tok);
      }
      h = (h ^ fnv1a64(tok)) * 0x100000001b3ULL;
    }
    h = (h ^ 0xff) * 0x100000001b3ULL;
  }

  std::vector<int> padded;
  for (const auto& seq : corpus) {
    padded.assign(static_cast<std::size_t>(order - 1), kPad);
    for (const auto& tok : seq) padded.push_back(model.ids_.at(tok));
    for (std::size_t j = static_cast<std::size_t>(order - 1); j < padded.size(); ++j) {
      for (int k = 1; k <= order; ++k) {
        const int* ctx = padded.data() + j - static_cast<std::size_t>(k - 1);
        Row& row = model.tables_[static_cast<std::size_t>(k - 1)][context_key(ctx, k - 1)];
        row.total += 1.0;
        row.counts[padded[j]] += 1.0;
      }
    }
  }

  model.descriptor_.backend_id = "ngram-o" + std::to_string(order) + "-a" + shortest(alpha) + "-" + hex64(h);
  model.descriptor_.provides_attention = false;
  model.descriptor_.max_sequence = static_cast<std::size_t>(-1);
  model.descriptor_.concurrency_safe = true;
  return model;
}

NgramModel NgramModel::unigram(const std::map<std::string, double>& probs) {
  if (probs.empty()) throw Error(Errc::kEmptyCorpus, "unigram table is empty");
  NgramModel model(1, 0.0);
  model.tables_.resize(1);
  Row& row = model.tables_[0][context_key(nullptr, 0)];
  double mass = 0.0;
  std::uint64_t h = fnv1a64("unigram");
  for (const auto& [tok, p] : probs) {
    if (!(p > 0.0) || p > 1.0) throw Error(Errc::kConfigError, "unigram probability for '" + tok + "' outside (0,1]");
    const int id = static_cast<int>(model.tokens_.size());
    model.ids_.emplace(tok, id);
    model.tokens_.push_back(tok);
    row.counts[id] = p;
    mass += p;
    h = (h ^ fnv1a64(tok)) * 0x100000001b3ULL;
    h = (h ^ fnv1a64(shortest(p))) * 0x100000001b3ULL;
  }
  if (mass > 1.0 + 1e-12) throw Error(Errc::kConfigError, "unigram probabilities sum above 1");
  row.unk = std::max(0.0, 1.0 - mass);
  row.total = mass + row.unk;
  model.descriptor_.backend_id = "unigram-" + hex64(h);
  model.descriptor_.max_sequence = static_cast<std::size_t>(-1);
  return model;
}

double NgramModel::prob_ids(const int* context_ids, int context_len, int token) const {
  for (int k = order_; k >= 1; --k) {
    const int need = k - 1;
    if (need > context_len) continue;
    const auto& table = tables_[static_cast<std::size_t>(k - 1)];
    auto it = table.find(context_key(context_ids + (context_len - need), need));
    if (it == table.end() || it->second.total <= 0.0) continue;
    const Row& row = it->second;
    const double denom = row.total + alpha_ * static_cast<double>(tokens_.size() + 1);
    if (token == kUnk) return (row.unk + alpha_) / denom;
    auto c = row.counts.find(token);
    return ((c == row.counts.end() ? 0.0 : c->second) + alpha_) / denom;
  }
  return 0.0;  // unreachable for a fitted model: the unigram row always exists
}

namespace {

// Padded id buffer: order-1 pads followed by the ids of `units`.
template <typename IdOf>
std::vector<int> padded_ids(UnitView units, int order, IdOf&& id_of, int pad) {
  std::vector<int> ids(static_cast<std::size_t>(order - 1), pad);
  ids.reserve(ids.size() + units.size());
  for (auto u : units) ids.push_back(id_of(u));
  return ids;
}

}  // namespace

double NgramModel::prob(UnitView context, std::string_view token) const {
  const auto ids = padded_ids(context, order_, [this](std::string_view u) { return id_of(u); }, kPad);
  const int len = order_ - 1;
  return prob_ids(ids.data() + ids.size() - static_cast<std::size_t>(len), len, id_of(token));
}

std::vector<double> NgramModel::distribution(UnitView context) const {
  const auto ids = padded_ids(context, order_, [this](std::string_view u) { return id_of(u); }, kPad);
  const int len = order_ - 1;
  const int* ctx = ids.data() + ids.size() - static_cast<std::size_t>(len);
  std::vector<double> out;
  out.reserve(tokens_.size() + 1);
  for (std::size_t v = 0; v < tokens_.size(); ++v) out.push_back(prob_ids(ctx, len, static_cast<int>(v)));
  out.push_back(prob_ids(ctx, len, kUnk));
  return out;
}

std::vector<double> NgramModel::logprobs(UnitView seq) const { return unit_logprobs(seq, 0); }

std::vector<double> NgramModel::unit_logprobs(UnitView units, std::size_t target_begin) const {
  if (target_begin > units.size()) throw Error(Errc::kSpanOutOfBounds, "target start beyond sequence");
  const auto ids = padded_ids(units, order_, [this](std::string_view u) { return id_of(u); }, kPad);
  const int len = order_ - 1;
  std::vector<double> out;
  out.reserve(units.size() - target_begin);
  for (std::size_t j = target_begin; j < units.size(); ++j) {
    const std::size_t pos = j + static_cast<std::size_t>(len);
    out.push_back(std::log(prob_ids(ids.data() + pos - static_cast<std::size_t>(len), len, ids[pos])));
  }
  return out;
}

std::vector<std::vector<std::string>> NgramModel::observed_contexts() const {
  std::vector<std::vector<std::string>> out;
  const auto& table = tables_[static_cast<std::size_t>(order_ - 1)];
  const int len = order_ - 1;
  for (const auto& [key, row] : table) {
    std::vector<std::string> ctx;
    for (int i = 0; i < len; ++i) {
      const int id = static_cast<int>((key >> (4 + 30 * i)) & ((1ULL << 30) - 1)) - 3;
      if (id != kPad) ctx.push_back(tokens_[static_cast<std::size_t>(id)]);
    }
    out.push_back(std::move(ctx));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace prunekit
