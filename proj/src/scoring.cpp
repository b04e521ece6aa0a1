#include "prunekit/scoring.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

#include "prunekit/error.hpp"
#include "prunekit/parallel.hpp"

namespace prunekit {

namespace {

double sequential_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void append_views(std::vector<std::string_view>& out, const Units& units) {
  for (const auto& u : units) out.emplace_back(u.text);
}

}  // namespace

ScoreResult objective_score(const LikelihoodBackend& backend, Objective obj, const Units& question,
                            const Units& reasoning_kept, const Units& answer) {
  if (answer.empty()) throw Error(Errc::kDegenerateAnswer, "objective needs a non-empty answer");
  std::vector<std::string_view> units;
  units.reserve(question.size() + reasoning_kept.size() + answer.size());
  append_views(units, question);
  append_views(units, reasoning_kept);
  append_views(units, answer);
  const std::size_t begin = obj == Objective::kJoint ? question.size() : question.size() + reasoning_kept.size();
  ScoreResult r;
  r.per_token = backend.unit_logprobs(units, begin);
  r.total = sequential_sum(r.per_token);
  return r;
}

ScoreResult conditional_score(const LikelihoodBackend& backend, const Units& context, const Units& target) {
  std::vector<std::string_view> units;
  append_views(units, context);
  append_views(units, target);
  ScoreResult r;
  r.per_token = backend.unit_logprobs(units, context.size());
  r.total = sequential_sum(r.per_token);
  return r;
}

std::vector<double> token_surprisals(const LikelihoodBackend& backend, const Units& question, const Units& reasoning,
                                     const Units& answer) {
  std::vector<std::string_view> units;
  append_views(units, question);
  append_views(units, reasoning);
  append_views(units, answer);
  const auto lp = backend.unit_logprobs(units, question.size());
  std::vector<double> out(reasoning.size());
  for (std::size_t i = 0; i < reasoning.size(); ++i) out[i] = lp[i] == 0.0 ? 0.0 : -lp[i];
  return out;
}

// ---------------------------------------------------------------------------

CacheKey make_cache_key(std::string_view backend_id, Objective obj, UnitView question, UnitView reasoning_kept,
                        UnitView answer) {
  Sha256 h;
  h.add_field("prunekit-score-v1").add_field(backend_id).add_field(objective_name(obj));
  for (UnitView seg : {question, reasoning_kept, answer}) {
    h.add_u64(seg.size());
    for (auto u : seg) h.add_field(u);
  }
  return CacheKey{h.finish()};
}

std::optional<ScoreResult> ScoreCache::find(const CacheKey& key) const {
  if (!enabled_) return std::nullopt;
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return it->second;
}

void ScoreCache::insert(const CacheKey& key, const ScoreResult& result) {
  if (!enabled_) return;
  {
    std::unique_lock lock(mu_);
    entries_[key] = result;
  }
  std::lock_guard flock(file_mu_);
  if (file_.is_open()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", result.total);
    file_ << to_hex(key.digest) << ' ' << buf << '\n';
    file_.flush();
  }
}

std::size_t ScoreCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return 0;
  std::size_t loaded = 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp != 64) continue;  // torn trailing record
    CacheKey key;
    bool ok = true;
    for (std::size_t i = 0; i < 32 && ok; ++i) {
      char* end = nullptr;
      const std::string byte = line.substr(2 * i, 2);
      key.digest[i] = static_cast<std::uint8_t>(std::strtoul(byte.c_str(), &end, 16));
      ok = end == byte.c_str() + 2;
    }
    char* end = nullptr;
    const double total = std::strtod(line.c_str() + sp + 1, &end);
    if (!ok || end == line.c_str() + sp + 1) continue;
    std::unique_lock lock(mu_);
    entries_[key] = ScoreResult{total, {}};
    ++loaded;
  }
  return loaded;
}

void ScoreCache::attach_file(const std::filesystem::path& path) {
  std::lock_guard flock(file_mu_);
  file_.open(path, std::ios::app);
  if (!file_) throw Error(Errc::kIoError, "cannot open score cache file " + path.string());
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

ScoreResult cached_score(ScoreCache* cache, const LikelihoodBackend& backend, Objective obj, const Units& question,
                         const Units& reasoning_kept, const Units& answer) {
  if (cache == nullptr || !cache->enabled()) return objective_score(backend, obj, question, reasoning_kept, answer);
  const auto q = unit_texts(question);
  const auto r = unit_texts(reasoning_kept);
  const auto a = unit_texts(answer);
  const CacheKey key = make_cache_key(backend.descriptor().backend_id, obj, q, r, a);
  if (auto hit = cache->find(key)) return *hit;
  ScoreResult res = objective_score(backend, obj, question, reasoning_kept, answer);
  cache->insert(key, res);
  return res;
}

std::vector<double> deletion_scores(const LikelihoodBackend& backend, Objective obj, const Instance& inst,
                                    std::span<const std::size_t> kept, std::size_t parallelism, ScoreCache* cache) {
  if (inst.answer.empty()) throw Error(Errc::kDegenerateAnswer, "instance '" + inst.id + "' has an empty answer");
  const std::size_t nq = inst.question.size();
  std::vector<std::string_view> base;
  base.reserve(nq + kept.size() + inst.answer.size());
  append_views(base, inst.question);
  for (std::size_t idx : kept) base.emplace_back(inst.reasoning.at(idx - 1).text);
  append_views(base, inst.answer);

  const auto session = backend.open_session(base);
  const bool use_cache = cache != nullptr && cache->enabled();
  const std::string& backend_id = backend.descriptor().backend_id;
  std::vector<double> scores(kept.size(), 0.0);

  parallel_for(kept.size(), parallelism, [&](std::size_t j) {
    std::vector<std::string_view> units;
    units.reserve(base.size() - 1);
    units.insert(units.end(), base.begin(), base.begin() + static_cast<std::ptrdiff_t>(nq + j));
    units.insert(units.end(), base.begin() + static_cast<std::ptrdiff_t>(nq + j + 1), base.end());
    const UnitView view(units);
    const std::size_t nr = kept.size() - 1;
    std::optional<CacheKey> key;
    if (use_cache) {
      key = make_cache_key(backend_id, obj, view.subspan(0, nq), view.subspan(nq, nr), view.subspan(nq + nr));
      if (auto hit = cache->find(*key)) {
        scores[j] = hit->total;
        return;
      }
    }
    const std::size_t begin = obj == Objective::kJoint ? nq : nq + nr;
    ScoreResult r;
    r.per_token = session->unit_logprobs(view, begin);
    r.total = sequential_sum(r.per_token);
    scores[j] = r.total;
    if (key) cache->insert(*key, r);
  });
  return scores;
}

}  // namespace prunekit
