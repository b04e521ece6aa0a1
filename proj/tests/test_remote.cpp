#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <functional>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "prunekit/error.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/remote.hpp"

using namespace prunekit;
using nlohmann::json;

namespace {

// Local stand-in for a scoring / generation endpoint.
class MockEndpoint {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit MockEndpoint(Handler score, Handler generate = {}) : score_(std::move(score)), generate_(std::move(generate)) {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      const int now = ++active_;
      int prev = peak_.load();
      while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
      }
      last_auth_ = req.get_header_value("Authorization");
      score_(req, res);
      --active_;
    });
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      generate_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  int hits() const { return hits_.load(); }
  int peak() const { return peak_.load(); }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  Handler score_, generate_;
  std::thread thread_;
  int port_{0};
  std::atomic<int> hits_{0}, active_{0}, peak_{0};
  std::string last_auth_;
};

// Splits the concatenated target into two-byte provider tokens, each scored
// -0.1 * (k + 1).
void chunked_reply(const httplib::Request& req, httplib::Response& res) {
  const json body = json::parse(req.body);
  std::string text;
  for (const auto& t : body["target"]) text += t.get<std::string>();
  json lps = json::array(), offs = json::array();
  for (std::size_t s = 0, k = 0; s < text.size(); s += 2, ++k) {
    lps.push_back(-0.1 * static_cast<double>(k + 1));
    offs.push_back({s, std::min(s + 2, text.size())});
  }
  res.set_content(json{{"id", body["id"]}, {"target_logprobs", lps}, {"offsets", offs}}.dump(), "application/json");
}

RemoteConfig config_for(const MockEndpoint& ep) {
  RemoteConfig cfg;
  cfg.score_url = ep.url("/score");
  cfg.generate_url = ep.url("/generate");
  cfg.timeout_seconds = 2.0;
  cfg.retries = 2;
  cfg.retry_backoff_ms = 1;
  cfg.token_env = "PRUNEKIT_TEST_TOKEN";
  return cfg;
}

std::vector<std::string_view> views(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Remote, EmptyTargetSendsNothing) {
  MockEndpoint ep(chunked_reply);
  RemoteClient client(config_for(ep));
  const std::vector<std::string> ctx{"q"};
  const auto s = client.score(views(ctx), {});
  EXPECT_EQ(s.total, 0.0);
  EXPECT_EQ(ep.hits(), 0);
}

TEST(Remote, TotalIsSumOfProviderLogprobs) {
  MockEndpoint ep(chunked_reply);
  RemoteClient client(config_for(ep));
  const std::vector<std::string> ctx{"q"}, tgt{"ab", "cd", "ef"};
  const auto s = client.score(views(ctx), views(tgt));
  EXPECT_NEAR(s.total, -0.1 - 0.2 - 0.3, 1e-9);
  ASSERT_EQ(s.per_unit.size(), 3u);
  EXPECT_NEAR(s.per_unit[1], -0.2, 1e-12);
  EXPECT_TRUE(s.alignment_gaps.empty());
}

TEST(Remote, StraddlingTokenCreditedToStartingUnit) {
  const std::vector<std::string> tgt{"abc", "d"};
  // Provider tokens "ab" [0,2) and "cd" [2,4): the second starts in unit 0
  // and spills into unit 1.
  const auto s = align_to_units(views(tgt), {-1.0, -2.0}, {{0, 2}, {2, 4}});
  EXPECT_NEAR(s.per_unit[0], -3.0, 1e-12);
  EXPECT_EQ(s.per_unit[1], 0.0);
  EXPECT_EQ(s.alignment_gaps, (std::vector<std::size_t>{0}));
  EXPECT_NEAR(s.total, -3.0, 1e-12);
}

TEST(Remote, SendsBearerTokenWithoutLeakingIt) {
  ::setenv("PRUNEKIT_TEST_TOKEN", "s3cret-value", 1);
  MockEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  RemoteClient client(config_for(ep));
  const std::vector<std::string> tgt{"a"};
  try {
    client.score({}, views(tgt));
    FAIL() << "expected AuthFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kAuthFailure);
    EXPECT_EQ(std::string(e.what()).find("s3cret"), std::string::npos);
  }
  EXPECT_EQ(ep.hits(), 1);  // not retried
  EXPECT_EQ(ep.last_auth(), "Bearer s3cret-value");
  ::unsetenv("PRUNEKIT_TEST_TOKEN");
}

TEST(Remote, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  MockEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = calls == 1 ? 503 : 429;
      return;
    }
    chunked_reply(req, res);
  });
  RemoteClient client(config_for(ep));
  const std::vector<std::string> tgt{"ab"};
  EXPECT_NEAR(client.score({}, views(tgt)).total, -0.1, 1e-12);
  EXPECT_EQ(ep.hits(), 3);
}

TEST(Remote, ExhaustedRetriesAreBackendFailure) {
  MockEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  RemoteClient client(config_for(ep));
  const std::vector<std::string> tgt{"ab"};
  try {
    client.score({}, views(tgt));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kBackendFailure);
  }
  EXPECT_EQ(ep.hits(), 3);
}

TEST(Remote, SlowServerTimesOut) {
  MockEndpoint ep([](const httplib::Request& req, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    chunked_reply(req, res);
  });
  auto cfg = config_for(ep);
  cfg.timeout_seconds = 0.2;
  cfg.retries = 0;
  RemoteClient client(cfg);
  const std::vector<std::string> tgt{"ab"};
  try {
    client.score({}, views(tgt));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTimeout);
  }
}

TEST(Remote, MismatchedIdRejected) {
  MockEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"id": "other", "target_logprobs": [-1.0], "offsets": [[0, 1]]})", "application/json");
  });
  RemoteClient client(config_for(ep));
  const std::vector<std::string> tgt{"a"};
  EXPECT_THROW(client.score({}, views(tgt)), Error);
}

TEST(Remote, InFlightBound) {
  MockEndpoint ep([](const httplib::Request& req, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    chunked_reply(req, res);
  });
  auto cfg = config_for(ep);
  cfg.max_in_flight = 2;
  RemoteClient client(cfg);
  const std::vector<std::string> tgt{"ab"};
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { client.score({}, views(tgt)); });
  for (auto& t : threads) t.join();
  EXPECT_LE(ep.peak(), 2);
  EXPECT_EQ(ep.hits(), 6);
}

TEST(Remote, BackendScoresTargetSuffix) {
  MockEndpoint ep(chunked_reply);
  RemoteBackend backend(config_for(ep));
  const std::vector<std::string> seq{"q", "ab", "cd"};
  const auto lp = backend.unit_logprobs(views(seq), 1);
  ASSERT_EQ(lp.size(), 2u);
  EXPECT_NEAR(lp[0] + lp[1], -0.3, 1e-12);
}

TEST(Remote, GenerationNeedsEndpoint) {
  RemoteConfig cfg;
  cfg.score_url = "http://127.0.0.1:1/score";
  RemoteClient client(cfg);
  try {
    client.generate(json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoGenerationEndpoint);
  }
}

// ---------------------------------------------------------------------------
// Rejection-sampling generation against the mock endpoint.

namespace {

// Every request gets `correct` samples answering "42" and the rest "7".
MockEndpoint::Handler sampler(int correct) {
  return [correct](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    json samples = json::array();
    for (int i = 0; i < body["n"].get<int>(); ++i) {
      const std::string reasoning = "step " + std::to_string(i) + " done";
      samples.push_back({{"reasoning", reasoning},
                         {"reasoning_offsets", {{0, 4}, {5, 6 + (i >= 10 ? 1 : 0)}, {7 + (i >= 10 ? 1 : 0), 11 + (i >= 10 ? 1 : 0)}}},
                         {"answer", i < correct ? "  42 " : "7"},
                         {"answer_offsets", {{0, i < correct ? 5 : 1}}}});
    }
    res.set_content(json{{"samples", samples}}.dump(), "application/json");
  };
}

}  // namespace

TEST(Generate, AllRejectedDropsQuestion) {
  MockEndpoint ep(chunked_reply, sampler(0));
  RemoteClient client(config_for(ep));
  const std::vector<Question> qs{{"q1", {"what ", "is ", "6x7?"}, "42"}};
  EXPECT_TRUE(generate(client, qs, SamplingSpec{}).empty());
}

TEST(Generate, KeepsExactlyOneSeededCorrectSample) {
  MockEndpoint ep(chunked_reply, sampler(10));
  RemoteClient client(config_for(ep));
  const std::vector<Question> qs{{"q1", {"what ", "is ", "6x7?"}, "42"}};
  SamplingSpec spec;
  spec.seed = 3;
  const auto a = generate(client, qs, spec);
  const auto b = generate(client, qs, spec);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(detokenize(a[0].reasoning), detokenize(b[0].reasoning));
  EXPECT_EQ(a[0].reasoning.size(), 3u);
  EXPECT_EQ(a[0].reasoning[0].text, "step ");
  EXPECT_EQ(detokenize(a[0].question), "what is 6x7?");

  // The draw is uniform over correct samples: different seeds reach more than
  // one of the ten.
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 40; ++s) {
    spec.seed = s;
    seen.insert(detokenize(generate(client, qs, spec)[0].reasoning));
  }
  EXPECT_GT(seen.size(), 5u);
}

TEST(Generate, CheckerNormalizesWhitespaceAndCase) {
  EXPECT_TRUE(answers_match("  42 ", "42"));
  EXPECT_TRUE(answers_match("The  Answer\n", "the answer"));
  EXPECT_FALSE(answers_match("42", "4 2"));
}
