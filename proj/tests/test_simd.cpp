#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "geoctx/rng.hpp"
#include "geoctx/simd/kernels.hpp"

using namespace geoctx;
using namespace geoctx::simd;

namespace {

std::vector<float> noise(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    vec_ = avx2_kernels();
    if (!vec_) GTEST_SKIP() << "no AVX2 on this host";
  }
  const KernelTable& ref_ = scalar_kernels();
  const KernelTable* vec_ = nullptr;
};

}  // namespace

TEST(SimdDispatch, ForceAndReset) {
  EXPECT_TRUE(force_isa(Isa::scalar));
  EXPECT_EQ(active_kernels().name, "scalar");
  reset_isa();
  if (avx2_kernels()) {
    EXPECT_EQ(active_kernels().name, "avx2");
    EXPECT_TRUE(force_isa(Isa::avx2));
    reset_isa();
  } else {
    EXPECT_FALSE(force_isa(Isa::avx2));
  }
}

TEST_F(SimdEquivalence, DotAndAxpy) {
  Rng rng(1);
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 17u, 64u, 257u}) {
    const auto a = noise(rng, n), b = noise(rng, n);
    EXPECT_NEAR(ref_.dot(a.data(), b.data(), n), vec_->dot(a.data(), b.data(), n), 1e-5f * (1 + n));
    auto y0 = noise(rng, n);
    auto y1 = y0;
    ref_.axpy(0.37f, a.data(), y0.data(), n);
    vec_->axpy(0.37f, a.data(), y1.data(), n);
    EXPECT_LE(max_abs_diff(y0, y1), 1e-6f);
  }
}

TEST_F(SimdEquivalence, Gemv) {
  Rng rng(2);
  for (std::size_t cols : {3u, 16u, 64u, 196u}) {
    const std::size_t rows = 7;
    const auto w = noise(rng, rows * cols), x = noise(rng, cols), bias = noise(rng, rows);
    std::vector<float> y0(rows), y1(rows);
    ref_.gemv(w.data(), bias.data(), x.data(), y0.data(), rows, cols);
    vec_->gemv(w.data(), bias.data(), x.data(), y1.data(), rows, cols);
    EXPECT_LE(max_abs_diff(y0, y1), 1e-5f);
    ref_.gemv(w.data(), nullptr, x.data(), y0.data(), rows, cols);
    vec_->gemv(w.data(), nullptr, x.data(), y1.data(), rows, cols);
    EXPECT_LE(max_abs_diff(y0, y1), 1e-5f);
  }
}

TEST_F(SimdEquivalence, GemmNtAndNnAcrossShapes) {
  Rng rng(3);
  for (std::size_t d : {5u, 16u, 64u}) {
    for (std::size_t m : {1u, 3u, 4u, 9u}) {
      for (std::size_t n : {1u, 8u, 13u, 70u}) {
        const std::size_t lda = d + 3, ldb = d + 1;
        const auto a = noise(rng, m * lda), b = noise(rng, n * ldb);
        std::vector<float> c0(m * n), c1(m * n);
        ref_.gemm_nt(a.data(), lda, b.data(), ldb, c0.data(), n, m, n, d, 0.25f);
        vec_->gemm_nt(a.data(), lda, b.data(), ldb, c1.data(), n, m, n, d, 0.25f);
        EXPECT_LE(max_abs_diff(c0, c1), 1e-5f) << d << " " << m << " " << n;

        const auto p = noise(rng, m * n), v = noise(rng, n * ldb);
        std::vector<float> o0(m * lda), o1(m * lda);
        ref_.gemm_nn(p.data(), n, v.data(), ldb, o0.data(), lda, m, n, d);
        vec_->gemm_nn(p.data(), n, v.data(), ldb, o1.data(), lda, m, n, d);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(o0[i * lda + k], o1[i * lda + k], 1e-5f);
      }
    }
  }
}

TEST_F(SimdEquivalence, SoftmaxRows) {
  Rng rng(4);
  for (std::size_t n : {1u, 5u, 8u, 33u, 1000u}) {
    const std::size_t rows = 3;
    auto s0 = noise(rng, rows * n, -20.0, 20.0);
    auto s1 = s0;
    ref_.softmax_rows(s0.data(), n, rows, n);
    vec_->softmax_rows(s1.data(), n, rows, n);
    EXPECT_LE(max_abs_diff(s0, s1), 1e-6f);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += s1[r * n + j];
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST_F(SimdEquivalence, AttendMatchesComposedReference) {
  Rng rng(5);
  for (std::size_t d : {16u, 12u}) {
    for (std::size_t m : {1u, 4u, 6u, 64u}) {
      for (std::size_t n : {1u, 6u, 64u, 131u}) {
        const std::size_t ld = 4 * d;
        const auto q = noise(rng, m * ld, -2.0, 2.0), k = noise(rng, n * ld, -2.0, 2.0), v = noise(rng, n * ld);
        std::vector<float> o0(m * ld, 0.0f), o1(m * ld, 0.0f), scratch(m * n);
        ref_.attend(q.data(), ld, k.data(), ld, v.data(), ld, o0.data(), ld, m, n, d, 0.25f, scratch.data());
        vec_->attend(q.data(), ld, k.data(), ld, v.data(), ld, o1.data(), ld, m, n, d, 0.25f, scratch.data());
        EXPECT_LE(max_abs_diff(o0, o1), 2e-6f) << d << " " << m << " " << n;
      }
    }
  }
}

TEST_F(SimdEquivalence, SquaredDistancesAreBitExact) {
  Rng rng(6);
  const std::size_t n = 37;
  std::vector<double> xs(n), ys(n), zs(n), o0(n), o1(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = rng.uniform(), ys[i] = rng.uniform(), zs[i] = rng.uniform();
  ref_.sq_dist3(0.1, 0.2, 0.3, xs.data(), ys.data(), zs.data(), n, o0.data());
  vec_->sq_dist3(0.1, 0.2, 0.3, xs.data(), ys.data(), zs.data(), n, o1.data());
  EXPECT_EQ(o0, o1);
}

TEST(Rng, SplitmixKnownVector) {
  // First output of the reference splitmix64 generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, MatchesDocumentedXorshiftStar) {
  std::uint64_t s = 0xE220A8397B1DCDAFULL;  // state after seeding with 0
  Rng r(0);
  for (int i = 0; i < 1000; ++i) {
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    ASSERT_EQ(r.next_u64(), s * 0x2545F4914F6CDD1DULL) << i;
  }
}

TEST(Rng, SameSeedSameStreamAndBounds) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng r(0);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(r.below(7), 7u);
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
