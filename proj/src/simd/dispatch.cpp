#include <atomic>

#include "geoctx/simd/kernels.hpp"

namespace geoctx::simd {

#if defined(GEOCTX_HAVE_AVX2_TU)
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(GEOCTX_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& detect() {
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

std::atomic<const KernelTable*>& override_slot() {
  static std::atomic<const KernelTable*> slot{nullptr};
  return slot;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(GEOCTX_HAVE_AVX2_TU)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  if (const KernelTable* forced = override_slot().load(std::memory_order_acquire)) return *forced;
  static const KernelTable& best = detect();
  return best;
}

bool force_isa(Isa isa) {
  const KernelTable* table = nullptr;
  switch (isa) {
    case Isa::scalar:
      table = &scalar_kernels();
      break;
    case Isa::avx2:
      table = avx2_kernels();
      break;
  }
  if (!table) return false;
  override_slot().store(table, std::memory_order_release);
  return true;
}

void reset_isa() { override_slot().store(nullptr, std::memory_order_release); }

}  // namespace geoctx::simd
