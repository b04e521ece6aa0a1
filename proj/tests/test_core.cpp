#include <gtest/gtest.h>

#include "prunekit/core.hpp"
#include "prunekit/error.hpp"
#include "support.hpp"

using namespace prunekit;
using prunekit::fixtures::make_instance;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no prunekit::Error thrown";
  return Errc::kIoError;
}

PruneTrace trace_from_ranks(std::vector<std::optional<std::size_t>> ranks, KeepFraction rho_min) {
  PruneTrace t;
  t.instance_id = "t";
  t.n = ranks.size();
  t.ranks = std::move(ranks);
  t.rho_min = rho_min;
  return t;
}

}  // namespace

TEST(ValidateInstance, WellFormedPassesThrough) {
  const Instance inst = make_instance("x", {"q"}, {"a", "b", "c"}, {"z"});
  EXPECT_EQ(validate_instance(inst).reasoning, inst.reasoning);
}

TEST(ValidateInstance, EmptyReasoningAndAnswer) {
  EXPECT_EQ(code_of([] { validate_instance(make_instance("x", {"q"}, {}, {"z"})); }), Errc::kEmptyReasoning);
  EXPECT_EQ(code_of([] { validate_instance(make_instance("x", {"q"}, {"a"}, {})); }), Errc::kEmptyAnswer);
}

TEST(ValidateInstance, DuplicateIds) {
  std::vector<Instance> ds{make_instance("x", {}, {"a"}, {"z"}), make_instance("x", {}, {"b"}, {"z"})};
  EXPECT_EQ(code_of([&] { validate_dataset(ds); }), Errc::kDuplicateId);
}

TEST(KeepFraction, ParsesDecimalAndRatio) {
  EXPECT_EQ(KeepFraction::parse("0.35"), KeepFraction(7, 20));
  EXPECT_EQ(KeepFraction::parse("2/3"), KeepFraction(2, 3));
  EXPECT_EQ(KeepFraction::parse("1"), KeepFraction::one());
  EXPECT_EQ(KeepFraction::parse("0.5").str(), "0.5");
  EXPECT_EQ(KeepFraction::parse("1.0").str(), "1.0");
  EXPECT_EQ(KeepFraction(2, 6).str(), "1/3");
}

TEST(KeepFraction, RejectsOutOfRange) {
  for (const char* bad : {"0", "1.5", "-0.1", "abc", "", "3/2", "1/0"}) {
    EXPECT_EQ(code_of([&] { KeepFraction::parse(bad); }), Errc::kInvalidKeepFraction) << bad;
  }
}

TEST(KeepFraction, RetainedIsCeiling) {
  EXPECT_EQ(KeepFraction::parse("0.5").retained(5), 3u);
  EXPECT_EQ(KeepFraction::parse("0.6").retained(10), 6u);
  EXPECT_EQ(KeepFraction::parse("0.1").retained(10), 1u);
  EXPECT_EQ(KeepFraction::parse("0.1").retained(1), 1u);
  EXPECT_EQ(KeepFraction(2, 3).retained(3), 2u);
  // 0.7 * 10 is 7.000000000000001 in binary floating point.
  EXPECT_EQ(KeepFraction::parse("0.7").retained(10), 7u);
}

TEST(KeepFraction, GridIsSortedAndUnique) {
  const auto g = parse_grid("0.5, 0.1,0.5,1.0");
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].str(), "0.1");
  EXPECT_EQ(g[2].str(), "1.0");
  EXPECT_EQ(default_grid().size(), 10u);
}

TEST(KeepSetAt, ReplaysRemovalOrder) {
  const auto t = trace_from_ranks({2, std::nullopt, 1, 3, std::nullopt}, KeepFraction(1, 5));
  const KeepSet k = keep_set_at(t, KeepFraction::parse("0.6"));
  EXPECT_EQ(k.kept, (std::vector<std::size_t>{2, 4, 5}));
  EXPECT_EQ(k.n, 5u);
}

TEST(KeepSetAt, FullRhoKeepsEverything) {
  const auto t = trace_from_ranks({2, std::nullopt, 1, 3, std::nullopt}, KeepFraction(1, 5));
  EXPECT_EQ(keep_set_at(t, KeepFraction::one()), full_keep(5));
}

TEST(KeepSetAt, BelowTraceDepthFails) {
  const auto t = trace_from_ranks({2, std::nullopt, 1, 3, std::nullopt}, KeepFraction(2, 5));
  EXPECT_EQ(code_of([&] { keep_set_at(t, KeepFraction(1, 5)); }), Errc::kRhoBelowTrace);
}

TEST(ApplyKeep, Subsequence) {
  const Units r = make_units({"a", "b", "c"});
  EXPECT_EQ(unit_texts(apply_keep(r, {{1, 3}, 3})), (std::vector<std::string_view>{"a", "c"}));
  EXPECT_EQ(apply_keep(r, full_keep(3)), r);
  EXPECT_TRUE(apply_keep(r, {{}, 3}).empty());
  EXPECT_EQ(code_of([&] { apply_keep(r, {{1}, 4}); }), Errc::kLengthMismatch);
}

TEST(ApplyKeep, KeepsOriginalIndices) {
  const Units kept = apply_keep(make_units({"a", "b", "c"}), {{2, 3}, 3});
  EXPECT_EQ(kept[0].index, 2u);
  EXPECT_EQ(kept[1].index, 3u);
  EXPECT_EQ(detokenize(kept), "bc");
}

TEST(Objective, NamesRoundTrip) {
  EXPECT_EQ(parse_objective("joint"), Objective::kJoint);
  EXPECT_EQ(parse_objective(objective_name(Objective::kAns)), Objective::kAns);
}

TEST(PruneTrace, RemovalOrder) {
  const auto t = trace_from_ranks({2, std::nullopt, 1, 3, std::nullopt}, KeepFraction(2, 5));
  EXPECT_EQ(t.removal_order(), (std::vector<std::size_t>{3, 1, 4}));
  EXPECT_EQ(t.removed_count(), 3u);
}
