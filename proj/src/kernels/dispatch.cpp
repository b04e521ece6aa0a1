#include <atomic>
#include <cstdlib>
#include <vector>

#include "prunekit/kernels.hpp"

namespace prunekit::kernels {

namespace detail {

#if !defined(PRUNEKIT_HAVE_AVX2)
const KernelSet* avx2_kernels() { return nullptr; }
#endif
#if !defined(PRUNEKIT_HAVE_NEON)
const KernelSet* neon_kernels() { return nullptr; }
#endif

bool cpu_has_avx2_fma() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

}  // namespace detail

namespace {

std::vector<const KernelSet*> probe() {
  std::vector<const KernelSet*> sets{&scalar()};
  if (const KernelSet* k = detail::avx2_kernels(); k != nullptr && detail::cpu_has_avx2_fma()) sets.push_back(k);
  if (const KernelSet* k = detail::neon_kernels(); k != nullptr) sets.push_back(k);
  return sets;
}

const std::vector<const KernelSet*>& registry() {
  static const std::vector<const KernelSet*> sets = probe();
  return sets;
}

const KernelSet* find(std::string_view name) {
  for (const KernelSet* k : registry()) {
    if (k->name == name) return k;
  }
  return nullptr;
}

const KernelSet* initial() {
  if (const char* forced = std::getenv("PRUNEKIT_KERNELS"); forced != nullptr) {
    if (const KernelSet* k = find(forced)) return k;
  }
  return registry().back();
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> ptr{initial()};
  return ptr;
}

}  // namespace

std::span<const KernelSet* const> available() { return registry(); }

const KernelSet& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelSet* k = find(name);
  if (k == nullptr) return false;
  current().store(k, std::memory_order_relaxed);
  return true;
}

}  // namespace prunekit::kernels
