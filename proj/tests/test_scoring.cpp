#include <gtest/gtest.h>

#include <cmath>

#include "prunekit/error.hpp"
#include "prunekit/scoring.hpp"
#include "prunekit/toy_transformer.hpp"
#include "support.hpp"

using namespace prunekit;

namespace {

Units U(const std::vector<std::string>& v) { return make_units(v); }

}  // namespace

TEST(ObjectiveScore, UnigramHandSums) {
  const auto m = fixtures::abc_unigram();
  const auto joint = objective_score(m, Objective::kJoint, {}, U({"a"}), U({"a"}));
  EXPECT_NEAR(joint.total, 2.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(joint.total, -1.3863, 1e-4);
  const auto ans = objective_score(m, Objective::kAns, {}, U({"a"}), U({"a"}));
  EXPECT_NEAR(ans.total, std::log(0.5), 1e-12);
  EXPECT_EQ(joint.per_token.size(), 2u);
  EXPECT_EQ(ans.per_token.size(), 1u);
}

TEST(ObjectiveScore, EmptyAnswerIsDegenerate) {
  const auto m = fixtures::abc_unigram();
  try {
    objective_score(m, Objective::kAns, {}, U({"a"}), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDegenerateAnswer);
  }
}

TEST(ObjectiveScore, ChainRuleOnBigram) {
  const auto world = fixtures::random_ngram_world(9, 30, 15, 2, 0.2);
  for (const auto& inst : world.instances) {
    const double joint = objective_score(world.model, Objective::kJoint, inst.question, inst.reasoning, inst.answer).total;
    const double ans = objective_score(world.model, Objective::kAns, inst.question, inst.reasoning, inst.answer).total;
    const double r = conditional_score(world.model, inst.question, inst.reasoning).total;
    EXPECT_NEAR(joint, r + ans, 1e-9);
  }
}

TEST(ObjectiveScore, ChainRuleOnToyTransformer) {
  const ToyTransformer lm(4);
  const Units q = U({"Q: ", "2+2"}), r = U({" two", " plus", " two"}), a = U({" =4"});
  const double joint = objective_score(lm, Objective::kJoint, q, r, a).total;
  const double ans = objective_score(lm, Objective::kAns, q, r, a).total;
  EXPECT_NEAR(joint, conditional_score(lm, q, r).total + ans, 1e-9);
}

TEST(TokenSurprisals, UnigramValues) {
  const auto m = fixtures::abc_unigram();
  auto s = token_surprisals(m, {}, U({"a", "c"}), U({"a"}));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(s[0], 0.6931, 1e-4);
  EXPECT_NEAR(s[1], 2.0794, 1e-4);
  s = token_surprisals(m, {}, U({"b", "a", "c"}), U({"a"}));
  EXPECT_NEAR(s[0], -std::log(0.25), 1e-12);
  EXPECT_NEAR(s[1], -std::log(0.5), 1e-12);
  EXPECT_NEAR(s[2], -std::log(0.125), 1e-12);
}

TEST(TokenSurprisals, CertainTokenIsZero) {
  const auto m = NgramModel::unigram({{"x", 1.0}});
  const auto s = token_surprisals(m, {}, U({"x"}), U({"x"}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_FALSE(std::signbit(s[0]));
}

TEST(ScoreCache, RepeatCallHitsWithoutBackend) {
  const auto m = fixtures::abc_unigram();
  fixtures::CountingBackend counted(m);
  ScoreCache cache;
  const auto first = cached_score(&cache, counted, Objective::kJoint, {}, U({"a", "b"}), U({"c"}));
  const std::size_t calls = counted.calls();
  const auto second = cached_score(&cache, counted, Objective::kJoint, {}, U({"a", "b"}), U({"c"}));
  EXPECT_EQ(counted.calls(), calls);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(first.total, second.total);
}

TEST(ScoreCache, DistinctInputsMiss) {
  const auto m = fixtures::abc_unigram();
  ScoreCache cache;
  cached_score(&cache, m, Objective::kJoint, {}, U({"a", "b"}), U({"c"}));
  cached_score(&cache, m, Objective::kJoint, {}, U({"a"}), U({"c"}));
  cached_score(&cache, m, Objective::kAns, {}, U({"a"}), U({"c"}));
  // Unit boundaries are part of the key: "ab" differs from "a","b".
  cached_score(&cache, m, Objective::kAns, {}, U({"ab"}), U({"c"}));
  EXPECT_EQ(cache.misses(), 4u);
  EXPECT_EQ(cache.hits(), 0u);
}

TEST(ScoreCache, DisabledPassesThrough) {
  const auto m = fixtures::abc_unigram();
  fixtures::CountingBackend counted(m);
  ScoreCache off(false);
  const double a = cached_score(&off, counted, Objective::kJoint, {}, U({"a"}), U({"c"})).total;
  const double b = cached_score(&off, counted, Objective::kJoint, {}, U({"a"}), U({"c"})).total;
  EXPECT_EQ(a, b);
  EXPECT_EQ(counted.calls(), 2u);
  EXPECT_EQ(off.size(), 0u);
  EXPECT_EQ(a, objective_score(m, Objective::kJoint, {}, U({"a"}), U({"c"})).total);
}

TEST(ScoreCache, PersistsToFile) {
  fixtures::TempDir dir("cache");
  const auto m = fixtures::abc_unigram();
  const auto path = dir.path() / "scores.txt";
  double total = 0.0;
  {
    ScoreCache cache;
    cache.attach_file(path);
    total = cached_score(&cache, m, Objective::kJoint, {}, U({"a", "b"}), U({"c"})).total;
  }
  ScoreCache fresh;
  EXPECT_EQ(fresh.load(path), 1u);
  fixtures::CountingBackend counted(m);
  EXPECT_EQ(cached_score(&fresh, counted, Objective::kJoint, {}, U({"a", "b"}), U({"c"})).total, total);
  EXPECT_EQ(counted.calls(), 0u);
}

TEST(ScoreCache, KeyIncludesBackendId) {
  const std::vector<std::string_view> r{"a"}, a{"b"};
  EXPECT_NE(make_cache_key("x", Objective::kJoint, {}, r, a), make_cache_key("y", Objective::kJoint, {}, r, a));
}

TEST(DeletionScores, MatchLeaveOneOutRecomputation) {
  const auto world = fixtures::random_ngram_world(21, 10, 12, 3, 0.1);
  for (const auto& inst : world.instances) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 1; i <= inst.n(); i += 1) kept.push_back(i);
    for (std::size_t workers : {1u, 3u}) {
      const auto scores = deletion_scores(world.model, Objective::kJoint, inst, kept, workers);
      ASSERT_EQ(scores.size(), kept.size());
      for (std::size_t j = 0; j < kept.size(); ++j) {
        std::vector<std::size_t> rest = kept;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
        const double want = objective_score(world.model, Objective::kJoint, inst.question,
                                            apply_keep(inst.reasoning, {rest, inst.n()}), inst.answer)
                                .total;
        EXPECT_NEAR(scores[j], want, 1e-9);
      }
    }
  }
}

TEST(DeletionScores, ToySessionMatchesPlainScoring) {
  const ToyTransformer lm(2);
  const Instance inst = fixtures::make_instance("t", {"Q", ":"}, {"a", "b", "c", "d", "e", "f"}, {"=", "z"});
  std::vector<std::size_t> kept{1, 2, 4, 5, 6};
  const auto scores = deletion_scores(lm, Objective::kAns, inst, kept, 2);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    std::vector<std::size_t> rest = kept;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
    const double want =
        objective_score(lm, Objective::kAns, inst.question, apply_keep(inst.reasoning, {rest, 6}), inst.answer).total;
    EXPECT_NEAR(scores[j], want, 1e-9);
  }
}
