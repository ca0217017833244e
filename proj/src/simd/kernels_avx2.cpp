// Compiled with -mavx2 -mfma. Nothing in here may run before dispatch has
// confirmed CPU support.
#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "geoctx/simd/kernels.hpp"

namespace geoctx::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_avx2(const float* w, const float* bias, const float* x, float* y, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float acc = dot_avx2(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void gemm_nt_avx2(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
                  std::size_t ldc, std::size_t m, std::size_t n, std::size_t d, float scale) {
  if (d == 16 && m >= 4) {
    // Head width of the default engine. Transpose B into 16 rows of n so each
    // output vector is a chain of broadcast FMAs, four query rows at a time.
    thread_local std::vector<float> bt;
    const std::size_t n8 = (n + 7) / 8 * 8;
    bt.assign(16 * n8, 0.0f);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < 16; ++k) bt[k * n8 + j] = b[j * ldb + k];
    const __m256 vs = _mm256_set1_ps(scale);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const float* q0 = a + i * lda;
      const float* q1 = q0 + lda;
      const float* q2 = q1 + lda;
      const float* q3 = q2 + lda;
      for (std::size_t j = 0; j < n8; j += 8) {
        __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
        __m256 c2 = _mm256_setzero_ps(), c3 = _mm256_setzero_ps();
        for (std::size_t k = 0; k < 16; ++k) {
          const __m256 kv = _mm256_loadu_ps(bt.data() + k * n8 + j);
          c0 = _mm256_fmadd_ps(_mm256_set1_ps(q0[k]), kv, c0);
          c1 = _mm256_fmadd_ps(_mm256_set1_ps(q1[k]), kv, c1);
          c2 = _mm256_fmadd_ps(_mm256_set1_ps(q2[k]), kv, c2);
          c3 = _mm256_fmadd_ps(_mm256_set1_ps(q3[k]), kv, c3);
        }
        alignas(32) float tmp[4][8];
        _mm256_store_ps(tmp[0], _mm256_mul_ps(vs, c0));
        _mm256_store_ps(tmp[1], _mm256_mul_ps(vs, c1));
        _mm256_store_ps(tmp[2], _mm256_mul_ps(vs, c2));
        _mm256_store_ps(tmp[3], _mm256_mul_ps(vs, c3));
        const std::size_t w = std::min<std::size_t>(8, n - j);
        for (std::size_t r = 0; r < 4; ++r) std::copy(tmp[r], tmp[r] + w, c + (i + r) * ldc + j);
      }
    }
    for (; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = scale * dot_avx2(a + i * lda, b + j * ldb, d);
    return;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = scale * dot_avx2(a + i * lda, b + j * ldb, d);
}

void gemm_nn_avx2(const float* p, std::size_t ldp, const float* v, std::size_t ldv, float* c,
                  std::size_t ldc, std::size_t m, std::size_t n, std::size_t d) {
  if (d == 16) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps(), b0 = _mm256_setzero_ps(), b1 = _mm256_setzero_ps();
      __m256 e0 = _mm256_setzero_ps(), e1 = _mm256_setzero_ps(), f0 = _mm256_setzero_ps(), f1 = _mm256_setzero_ps();
      const float* p0 = p + i * ldp;
      const float* p1 = p0 + ldp;
      const float* p2 = p1 + ldp;
      const float* p3 = p2 + ldp;
      for (std::size_t j = 0; j < n; ++j) {
        const __m256 v0 = _mm256_loadu_ps(v + j * ldv);
        const __m256 v1 = _mm256_loadu_ps(v + j * ldv + 8);
        __m256 w = _mm256_set1_ps(p0[j]);
        a0 = _mm256_fmadd_ps(w, v0, a0);
        a1 = _mm256_fmadd_ps(w, v1, a1);
        w = _mm256_set1_ps(p1[j]);
        b0 = _mm256_fmadd_ps(w, v0, b0);
        b1 = _mm256_fmadd_ps(w, v1, b1);
        w = _mm256_set1_ps(p2[j]);
        e0 = _mm256_fmadd_ps(w, v0, e0);
        e1 = _mm256_fmadd_ps(w, v1, e1);
        w = _mm256_set1_ps(p3[j]);
        f0 = _mm256_fmadd_ps(w, v0, f0);
        f1 = _mm256_fmadd_ps(w, v1, f1);
      }
      _mm256_storeu_ps(c + i * ldc, a0);
      _mm256_storeu_ps(c + i * ldc + 8, a1);
      _mm256_storeu_ps(c + (i + 1) * ldc, b0);
      _mm256_storeu_ps(c + (i + 1) * ldc + 8, b1);
      _mm256_storeu_ps(c + (i + 2) * ldc, e0);
      _mm256_storeu_ps(c + (i + 2) * ldc + 8, e1);
      _mm256_storeu_ps(c + (i + 3) * ldc, f0);
      _mm256_storeu_ps(c + (i + 3) * ldc + 8, f1);
    }
    for (; i < m; ++i) {
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      const float* pi = p + i * ldp;
      for (std::size_t j = 0; j < n; ++j) {
        const __m256 w = _mm256_set1_ps(pi[j]);
        acc0 = _mm256_fmadd_ps(w, _mm256_loadu_ps(v + j * ldv), acc0);
        acc1 = _mm256_fmadd_ps(w, _mm256_loadu_ps(v + j * ldv + 8), acc1);
      }
      _mm256_storeu_ps(c + i * ldc, acc0);
      _mm256_storeu_ps(c + i * ldc + 8, acc1);
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    float* row = c + i * ldc;
    for (std::size_t k = 0; k < d; ++k) row[k] = 0.0f;
    for (std::size_t j = 0; j < n; ++j) axpy_avx2(p[i * ldp + j], v + j * ldv, row, d);
  }
}

// exp(x) for x <= 0 (softmax inputs after max subtraction): Cody-Waite range
// reduction and a degree-6 polynomial, relative error about 2e-7.
inline __m256 exp_avx2(__m256 x) {
  x = _mm256_max_ps(x, _mm256_set1_ps(-87.0f));
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 fx = _mm256_round_ps(_mm256_mul_ps(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  const __m256i e = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(fx), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

void softmax_rows_avx2(float* s, std::size_t ld, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    float* row = s + i * ld;
    __m256 vmax = _mm256_set1_ps(-3.0e38f);
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, vmax);
    float mx = *std::max_element(lanes, lanes + 8);
    for (; j < n; ++j) mx = std::max(mx, row[j]);
    const __m256 vm = _mm256_set1_ps(mx);
    __m256 vsum = _mm256_setzero_ps();
    j = 0;
    for (; j + 8 <= n; j += 8) {
      const __m256 e = exp_avx2(_mm256_sub_ps(_mm256_loadu_ps(row + j), vm));
      _mm256_storeu_ps(row + j, e);
      vsum = _mm256_add_ps(vsum, e);
    }
    float sum = hsum(vsum);
    for (; j < n; ++j) {
      alignas(32) float one[8] = {row[j] - mx};
      _mm256_store_ps(one, exp_avx2(_mm256_load_ps(one)));
      row[j] = one[0];
      sum += row[j];
    }
    const __m256 inv = _mm256_set1_ps(1.0f / sum);
    j = 0;
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(row + j, _mm256_mul_ps(inv, _mm256_loadu_ps(row + j)));
    for (; j < n; ++j) row[j] *= 1.0f / sum;
  }
}

void attend_avx2(const float* q, std::size_t ldq, const float* k, std::size_t ldk, const float* v,
                 std::size_t ldv, float* out, std::size_t ldo, std::size_t m, std::size_t n, std::size_t d,
                 float scale, float* scratch) {
  if (d != 16 || n == 0) {
    gemm_nt_avx2(q, ldq, k, ldk, scratch, n, m, n, d, scale);
    softmax_rows_avx2(scratch, n, m, n);
    gemm_nn_avx2(scratch, n, v, ldv, out, ldo, m, n, d);
    return;
  }
  // K is transposed once per call; queries then go four at a time so the
  // score block stays cache resident.
  thread_local std::vector<float> kt;
  thread_local std::vector<float> sc;
  const std::size_t n8 = (n + 7) / 8 * 8;
  kt.resize(16 * n8);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < 16; ++c) kt[c * n8 + j] = k[j * ldk + c];
  for (std::size_t j = n; j < n8; ++j)
    for (std::size_t c = 0; c < 16; ++c) kt[c * n8 + j] = 0.0f;
  sc.resize(4 * n8);
  const __m256 vs = _mm256_set1_ps(scale);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* q0 = q + i * ldq;
    const float* q1 = q0 + ldq;
    const float* q2 = q1 + ldq;
    const float* q3 = q2 + ldq;
    __m256 m0 = _mm256_set1_ps(-3.0e38f), m1 = m0, m2 = m0, m3 = m0;
    for (std::size_t j = 0; j < n8; j += 8) {
      __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
      __m256 c2 = _mm256_setzero_ps(), c3 = _mm256_setzero_ps();
      for (std::size_t c = 0; c < 16; ++c) {
        const __m256 kv = _mm256_loadu_ps(kt.data() + c * n8 + j);
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(q0[c]), kv, c0);
        c1 = _mm256_fmadd_ps(_mm256_set1_ps(q1[c]), kv, c1);
        c2 = _mm256_fmadd_ps(_mm256_set1_ps(q2[c]), kv, c2);
        c3 = _mm256_fmadd_ps(_mm256_set1_ps(q3[c]), kv, c3);
      }
      c0 = _mm256_mul_ps(vs, c0);
      c1 = _mm256_mul_ps(vs, c1);
      c2 = _mm256_mul_ps(vs, c2);
      c3 = _mm256_mul_ps(vs, c3);
      if (j + 8 > n) {
        // Padding keys must not win the max.
        alignas(32) float lane[8];
        for (std::size_t t = 0; t < 8; ++t) lane[t] = j + t < n ? 0.0f : -3.0e38f;
        const __m256 pad = _mm256_load_ps(lane);
        c0 = _mm256_add_ps(c0, pad);
        c1 = _mm256_add_ps(c1, pad);
        c2 = _mm256_add_ps(c2, pad);
        c3 = _mm256_add_ps(c3, pad);
      }
      _mm256_storeu_ps(sc.data() + j, c0);
      _mm256_storeu_ps(sc.data() + n8 + j, c1);
      _mm256_storeu_ps(sc.data() + 2 * n8 + j, c2);
      _mm256_storeu_ps(sc.data() + 3 * n8 + j, c3);
      m0 = _mm256_max_ps(m0, c0);
      m1 = _mm256_max_ps(m1, c1);
      m2 = _mm256_max_ps(m2, c2);
      m3 = _mm256_max_ps(m3, c3);
    }
    float inv[4];
    const __m256 mx[4] = {m0, m1, m2, m3};
    for (std::size_t r = 0; r < 4; ++r) {
      alignas(32) float lanes[8];
      _mm256_store_ps(lanes, mx[r]);
      const __m256 vm = _mm256_set1_ps(*std::max_element(lanes, lanes + 8));
      float* row = sc.data() + r * n8;
      __m256 vsum = _mm256_setzero_ps();
      for (std::size_t j = 0; j < n8; j += 8) {
        const __m256 e = exp_avx2(_mm256_sub_ps(_mm256_loadu_ps(row + j), vm));
        _mm256_storeu_ps(row + j, e);
        vsum = _mm256_add_ps(vsum, e);
      }
      inv[r] = 1.0f / hsum(vsum);
    }
    __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps(), b0 = _mm256_setzero_ps(), b1 = _mm256_setzero_ps();
    __m256 e0 = _mm256_setzero_ps(), e1 = _mm256_setzero_ps(), f0 = _mm256_setzero_ps(), f1 = _mm256_setzero_ps();
    const float* p0 = sc.data();
    const float* p1 = p0 + n8;
    const float* p2 = p1 + n8;
    const float* p3 = p2 + n8;
    for (std::size_t j = 0; j < n; ++j) {
      const __m256 v0 = _mm256_loadu_ps(v + j * ldv);
      const __m256 v1 = _mm256_loadu_ps(v + j * ldv + 8);
      __m256 w = _mm256_set1_ps(p0[j]);
      a0 = _mm256_fmadd_ps(w, v0, a0);
      a1 = _mm256_fmadd_ps(w, v1, a1);
      w = _mm256_set1_ps(p1[j]);
      b0 = _mm256_fmadd_ps(w, v0, b0);
      b1 = _mm256_fmadd_ps(w, v1, b1);
      w = _mm256_set1_ps(p2[j]);
      e0 = _mm256_fmadd_ps(w, v0, e0);
      e1 = _mm256_fmadd_ps(w, v1, e1);
      w = _mm256_set1_ps(p3[j]);
      f0 = _mm256_fmadd_ps(w, v0, f0);
      f1 = _mm256_fmadd_ps(w, v1, f1);
    }
    const auto put = [&](std::size_t r, __m256 lo, __m256 hi) {
      const __m256 s = _mm256_set1_ps(inv[r]);
      _mm256_storeu_ps(out + (i + r) * ldo, _mm256_mul_ps(s, lo));
      _mm256_storeu_ps(out + (i + r) * ldo + 8, _mm256_mul_ps(s, hi));
    };
    put(0, a0, a1);
    put(1, b0, b1);
    put(2, e0, e1);
    put(3, f0, f1);
  }
  if (i < m) {
    const std::size_t rest = m - i;
    gemm_nt_avx2(q + i * ldq, ldq, k, ldk, scratch, n, rest, n, d, scale);
    softmax_rows_avx2(scratch, n, rest, n);
    gemm_nn_avx2(scratch, n, v, ldv, out + i * ldo, ldo, rest, n, d);
  }
}

void sq_dist3_avx2(double qx, double qy, double qz, const double* xs, const double* ys,
                   const double* zs, std::size_t n, double* out) {
  const __m256d vx = _mm256_set1_pd(qx);
  const __m256d vy = _mm256_set1_pd(qy);
  const __m256d vz = _mm256_set1_pd(qz);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vz);
    // No FMA here: distances must match the scalar table bit for bit so that
    // nearest-neighbor ties resolve identically on every ISA.
    const __m256d s = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                    _mm256_mul_pd(dz, dz));
    _mm256_storeu_pd(out + i, s);
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    out[i] = dx * dx + dy * dy + dz * dz;
  }
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{"avx2",       dot_avx2,     axpy_avx2,    gemv_avx2,
                                 gemm_nt_avx2, gemm_nn_avx2, softmax_rows_avx2,
                                 attend_avx2,  sq_dist3_avx2};
  return table;
}

}  // namespace geoctx::simd
