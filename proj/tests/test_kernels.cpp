#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "prunekit/kernels.hpp"
#include "prunekit/rng.hpp"

using namespace prunekit;

namespace {

std::vector<double> random_vector(SplitMix64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

double tol(double reference, std::size_t n) { return 1e-13 * static_cast<double>(n + 1) * std::max(1.0, std::abs(reference)); }

}  // namespace

// Every compiled-in variant must agree with the scalar reference on lengths
// that exercise full vectors, partial tails and the empty case.
class KernelEquivalence : public ::testing::TestWithParam<const kernels::KernelSet*> {};

TEST_P(KernelEquivalence, Dot) {
  const auto& ref = kernels::scalar();
  const auto* k = GetParam();
  SplitMix64 rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 31u, 64u, 1000u}) {
    auto a = random_vector(rng, n), b = random_vector(rng, n);
    const double want = ref.dot(a.data(), b.data(), n);
    EXPECT_NEAR(k->dot(a.data(), b.data(), n), want, tol(want, n)) << k->name << " n=" << n;
  }
}

TEST_P(KernelEquivalence, Axpy) {
  const auto& ref = kernels::scalar();
  const auto* k = GetParam();
  SplitMix64 rng(2);
  for (std::size_t n : {0u, 1u, 5u, 8u, 13u, 100u}) {
    auto x = random_vector(rng, n), y = random_vector(rng, n);
    auto y_ref = y;
    ref.axpy(0.75, x.data(), y_ref.data(), n);
    k->axpy(0.75, x.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], y_ref[i], 1e-14) << k->name;
  }
}

TEST_P(KernelEquivalence, Matvec) {
  const auto& ref = kernels::scalar();
  const auto* k = GetParam();
  SplitMix64 rng(3);
  for (auto [rows, cols] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {3, 5}, {32, 32}, {64, 32}, {7, 33}}) {
    auto w = random_vector(rng, rows * cols), x = random_vector(rng, cols);
    std::vector<double> y(rows), y_ref(rows);
    ref.matvec(w.data(), x.data(), y_ref.data(), rows, cols);
    k->matvec(w.data(), x.data(), y.data(), rows, cols);
    for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(y[i], y_ref[i], tol(y_ref[i], cols)) << k->name;
  }
}

TEST_P(KernelEquivalence, Sum) {
  const auto& ref = kernels::scalar();
  const auto* k = GetParam();
  SplitMix64 rng(4);
  for (std::size_t n : {0u, 1u, 2u, 9u, 257u}) {
    auto x = random_vector(rng, n);
    const double want = ref.sum(x.data(), n);
    EXPECT_NEAR(k->sum(x.data(), n), want, tol(want, n)) << k->name;
  }
}

INSTANTIATE_TEST_SUITE_P(Available, KernelEquivalence, ::testing::ValuesIn(kernels::available().begin(),
                                                                            kernels::available().end()),
                         [](const auto& info) { return std::string(info.param->name); });

TEST(KernelDispatch, ScalarAlwaysAvailable) {
  ASSERT_FALSE(kernels::available().empty());
  EXPECT_EQ(kernels::available().front()->name, "scalar");
}

TEST(KernelDispatch, SelectSwitchesActiveSet) {
  const std::string before(kernels::active().name);
  ASSERT_TRUE(kernels::select("scalar"));
  EXPECT_EQ(kernels::active().name, "scalar");
  EXPECT_FALSE(kernels::select("no-such-isa"));
  ASSERT_TRUE(kernels::select(before));
}

TEST(KernelDispatch, Avx2MatchesCpuid) {
  const bool compiled = kernels::detail::avx2_kernels() != nullptr;
  bool listed = false;
  for (const auto* k : kernels::available()) listed |= k->name == "avx2";
  EXPECT_EQ(listed, compiled && kernels::detail::cpu_has_avx2_fma());
}
