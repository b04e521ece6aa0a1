#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "prunekit/backend.hpp"
#include "json.hpp"

namespace prunekit {

struct RemoteConfig {
  std::string score_url;     // e.g. http://host:8000/score
  std::string generate_url;  // empty: generation unavailable
  std::string token_env{"PRUNEKIT_API_TOKEN"};
  double timeout_seconds{30.0};
  int retries{3};
  int retry_backoff_ms{200};
  std::size_t max_in_flight{4};
};

struct RemoteScore {
  std::vector<double> per_unit;  // provider log-probs summed inside each unit's byte span
  double total{0.0};             // sum of per_unit
  // Units whose span is straddled by a provider token. The straddling token
  // is credited to the unit containing its start, so totals stay exact.
  std::vector<std::size_t> alignment_gaps;
};

// Client for the teacher-forced scoring contract:
//   POST <score_url> {"context": [str], "target": [str], "id": str}
//     -> {"id": str, "target_logprobs": [float], "offsets": [[start, end]]}
// Offsets are byte ranges into the concatenated target text. Auth is a bearer
// token read from the environment; it is never logged or echoed in errors.
class RemoteClient {
 public:
  explicit RemoteClient(RemoteConfig cfg);
  ~RemoteClient();

  const RemoteConfig& config() const noexcept { return cfg_; }

  RemoteScore score(UnitView context, UnitView target) const;

  // POST to the generation endpoint; throws NoGenerationEndpoint if unset.
  nlohmann::json generate(const nlohmann::json& body) const;

  std::uint64_t requests_sent() const noexcept { return sent_.load(); }

 private:
  nlohmann::json post(const std::string& url, const nlohmann::json& body) const;

  RemoteConfig cfg_;
  std::string token_;
  mutable std::counting_semaphore<1024> in_flight_;
  mutable std::atomic<std::uint64_t> next_id_{0};
  mutable std::atomic<std::uint64_t> sent_{0};
};

// Aligns provider tokens to unit spans (pure; exposed for testing).
RemoteScore align_to_units(UnitView target, const std::vector<double>& logprobs,
                           const std::vector<std::pair<std::size_t, std::size_t>>& offsets);

class RemoteBackend final : public LikelihoodBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<double> unit_logprobs(UnitView units, std::size_t target_begin) const override;
  const RemoteClient& client() const noexcept { return client_; }
  std::uint64_t alignment_gaps() const noexcept { return gaps_.load(); }

 private:
  RemoteClient client_;
  BackendDescriptor descriptor_;
  mutable std::atomic<std::uint64_t> gaps_{0};
};

}  // namespace prunekit
