#include "httplib.h"

#include "prunekit/remote.hpp"

#include <cstdlib>
#include <thread>

#include "prunekit/error.hpp"

namespace prunekit {

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(Errc::kConfigError, "endpoint URL needs a scheme: '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

}  // namespace

RemoteClient::RemoteClient(RemoteConfig cfg)
    : cfg_(std::move(cfg)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cfg_.max_in_flight, 1, 1024))) {
  if (const char* tok = std::getenv(cfg_.token_env.c_str()); tok != nullptr) token_ = tok;
}

RemoteClient::~RemoteClient() = default;

nlohmann::json RemoteClient::post(const std::string& url, const nlohmann::json& body) const {
  const SplitUrl target = split_url(url);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  const std::string payload = body.dump();

  Errc last = Errc::kBackendFailure;
  std::string detail;
  const int attempts = std::max(1, cfg_.retries + 1);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.retry_backoff_ms << (attempt - 1)));
    httplib::Result res;
    {
      SlotGuard slot(in_flight_);
      httplib::Client cli(target.base);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      sent_.fetch_add(1, std::memory_order_relaxed);
      res = cli.Post(target.path, headers, payload, "application/json");
    }
    if (!res) {
      const auto err = res.error();
      last = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? Errc::kTimeout
                                                                                       : Errc::kBackendFailure;
      detail = httplib::to_string(err);
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw Error(Errc::kAuthFailure, "endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      last = Errc::kBackendFailure;
      detail = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) throw Error(Errc::kBackendFailure, "HTTP " + std::to_string(status) + " from " + target.base);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kBackendFailure, std::string("malformed response: ") + e.what());
    }
  }
  throw Error(last, detail + " after " + std::to_string(attempts) + " attempt(s) to " + target.base);
}

RemoteScore align_to_units(UnitView target, const std::vector<double>& logprobs,
                           const std::vector<std::pair<std::size_t, std::size_t>>& offsets) {
  if (logprobs.size() != offsets.size()) {
    throw Error(Errc::kBackendFailure, "response has " + std::to_string(logprobs.size()) + " log-probs but " +
                                           std::to_string(offsets.size()) + " offsets");
  }
  RemoteScore out;
  out.per_unit.assign(target.size(), 0.0);
  if (target.empty()) return out;
  std::vector<std::size_t> end(target.size());
  std::size_t acc = 0;
  for (std::size_t u = 0; u < target.size(); ++u) end[u] = (acc += target[u].size());

  std::vector<bool> gap(target.size(), false);
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const auto [s, e] = offsets[k];
    if (s >= acc || e < s) throw Error(Errc::kBackendFailure, "provider offset outside the target span");
    const std::size_t u = static_cast<std::size_t>(std::upper_bound(end.begin(), end.end(), s) - end.begin());
    out.per_unit[u] += logprobs[k];
    if (e > end[u]) gap[u] = true;
  }
  for (std::size_t u = 0; u < target.size(); ++u) {
    if (gap[u]) out.alignment_gaps.push_back(u);
    out.total += out.per_unit[u];
  }
  return out;
}

RemoteScore RemoteClient::score(UnitView context, UnitView target) const {
  if (target.empty()) return {};
  nlohmann::json body;
  body["context"] = std::vector<std::string>(context.begin(), context.end());
  body["target"] = std::vector<std::string>(target.begin(), target.end());
  const std::string id = "req-" + std::to_string(next_id_.fetch_add(1));
  body["id"] = id;
  const nlohmann::json resp = post(cfg_.score_url, body);
  try {
    if (resp.at("id").get<std::string>() != id) throw Error(Errc::kBackendFailure, "response id does not match request");
    const auto lps = resp.at("target_logprobs").get<std::vector<double>>();
    const auto offs = resp.at("offsets").get<std::vector<std::pair<std::size_t, std::size_t>>>();
    return align_to_units(target, lps, offs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kBackendFailure, std::string("malformed score response: ") + e.what());
  }
}

nlohmann::json RemoteClient::generate(const nlohmann::json& body) const {
  if (cfg_.generate_url.empty()) throw Error(Errc::kNoGenerationEndpoint, "no generation endpoint configured");
  return post(cfg_.generate_url, body);
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : client_(std::move(cfg)) {
  descriptor_.backend_id = "remote:" + client_.config().score_url;
  descriptor_.provides_attention = false;
  descriptor_.max_sequence = static_cast<std::size_t>(-1);
  descriptor_.concurrency_safe = true;
}

std::vector<double> RemoteBackend::unit_logprobs(UnitView units, std::size_t target_begin) const {
  if (target_begin > units.size()) throw Error(Errc::kSpanOutOfBounds, "target start beyond sequence");
  RemoteScore s = client_.score(units.subspan(0, target_begin), units.subspan(target_begin));
  if (!s.alignment_gaps.empty()) gaps_.fetch_add(s.alignment_gaps.size(), std::memory_order_relaxed);
  return std::move(s.per_unit);
}

}  // namespace prunekit
