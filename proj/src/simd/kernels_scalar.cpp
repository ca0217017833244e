#include <algorithm>
#include <cmath>

#include "geoctx/simd/kernels.hpp"

namespace geoctx::simd {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const float* w, const float* bias, const float* x, float* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    float acc = dot_scalar(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void gemm_nt_scalar(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                    std::size_t ldc, std::size_t m, std::size_t n, std::size_t d, float scale) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = scale * dot_scalar(a + i * lda, b + j * ldb, d);
}

void gemm_nn_scalar(const float* p, std::size_t ldp, const float* v, std::size_t ldv, float* c,
                    std::size_t ldc, std::size_t m, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < m; ++i) {
    float* row = c + i * ldc;
    for (std::size_t k = 0; k < d; ++k) row[k] = 0.0f;
    for (std::size_t j = 0; j < n; ++j) axpy_scalar(p[i * ldp + j], v + j * ldv, row, d);
  }
}

void softmax_rows_scalar(float* s, std::size_t ld, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    float* row = s + i * ld;
    const float mx = *std::max_element(row, row + n);
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
}

void attend_scalar(const float* q, std::size_t ldq, const float* k, std::size_t ldk, const float* v,
                   std::size_t ldv, float* out, std::size_t ldo, std::size_t m, std::size_t n, std::size_t d,
                   float scale, float* scratch) {
  gemm_nt_scalar(q, ldq, k, ldk, scratch, n, m, n, d, scale);
  softmax_rows_scalar(scratch, n, m, n);
  gemm_nn_scalar(scratch, n, v, ldv, out, ldo, m, n, d);
}

void sq_dist3_scalar(double qx, double qy, double qz, const double* xs, const double* ys,
                     const double* zs, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    out[i] = dx * dx + dy * dy + dz * dz;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",       dot_scalar,     axpy_scalar,    gemv_scalar,
                                 gemm_nt_scalar, gemm_nn_scalar, softmax_rows_scalar,
                                 attend_scalar,  sq_dist3_scalar};
  return table;
}

}  // namespace geoctx::simd
