#pragma once

// Dense double-precision inner loops shared by the toy transformer, the
// attention aggregators and the surrogate MLP.
//
// Every kernel has a scalar reference implementation. Vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64) are compiled into separate
// translation units and selected once at startup from the running CPU. The
// choice can be forced with PRUNEKIT_KERNELS=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace prunekit::kernels {

struct KernelSet {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x, W row-major rows x cols
  void (*matvec)(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
};

const KernelSet& scalar();
// Variants compiled in and supported by this CPU, scalar first.
std::span<const KernelSet* const> available();
const KernelSet& active();
// Overrides the active set; returns false if the name is unavailable.
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void matvec(std::span<const double> w, std::span<const double> x, std::span<double> y) {
  active().matvec(w.data(), x.data(), y.data(), y.size(), x.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

namespace detail {
const KernelSet* avx2_kernels();  // nullptr when not compiled in
const KernelSet* neon_kernels();
bool cpu_has_avx2_fma();
}  // namespace detail

}  // namespace prunekit::kernels
