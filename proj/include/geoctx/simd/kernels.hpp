#pragma once

#include <cstddef>
#include <string_view>

namespace geoctx::simd {

// Data-parallel inner loops. Every ISA provides the same table; the scalar
// table is the reference the others are equivalence-tested against.
struct KernelTable {
  std::string_view name;

  // Σ a[i]·b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);

  // y[i] += alpha·x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);

  // y[r] = Σ_c w[r·cols + c]·x[c] (+ bias[r] when bias is non-null)
  void (*gemv)(const float* w, const float* bias, const float* x, float* y, std::size_t rows,
               std::size_t cols);

  // c[i·ldc + j] = scale · Σ_k a[i·lda + k]·b[j·ldb + k]   (C = scale·A·Bᵀ)
  void (*gemm_nt)(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, std::size_t m, std::size_t n, std::size_t d, float scale);

  // c[i·ldc + k] = Σ_j p[i·ldp + j]·v[j·ldv + k]   (C = P·V, overwrites C)
  void (*gemm_nn)(const float* p, std::size_t ldp, const float* v, std::size_t ldv, float* c,
                  std::size_t ldc, std::size_t m, std::size_t n, std::size_t d);

  // In-place softmax of each of `rows` rows of length n (stride ld).
  void (*softmax_rows)(float* s, std::size_t ld, std::size_t rows, std::size_t n);

  // Single-head attention: out = softmax(scale·Q·Kᵀ)·V for m queries over n
  // keys of width d. `scratch` must hold m·n floats.
  void (*attend)(const float* q, std::size_t ldq, const float* k, std::size_t ldk, const float* v,
                 std::size_t ldv, float* out, std::size_t ldo, std::size_t m, std::size_t n, std::size_t d,
                 float scale, float* scratch);

  // out[i] = (xs[i]-qx)² + (ys[i]-qy)² + (zs[i]-qz)²
  void (*sq_dist3)(double qx, double qy, double qz, const double* xs, const double* ys,
                   const double* zs, std::size_t n, double* out);
};

enum class Isa { scalar, avx2 };

const KernelTable& scalar_kernels();

/// Null when the AVX2 translation unit was not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// Best table for this CPU unless overridden with force_isa().
const KernelTable& active_kernels();

/// Test hook: pin the dispatch to a specific ISA. Returns false (and leaves the
/// dispatch unchanged) when the ISA is unavailable.
bool force_isa(Isa isa);

/// Restores automatic selection.
void reset_isa();

}  // namespace geoctx::simd
