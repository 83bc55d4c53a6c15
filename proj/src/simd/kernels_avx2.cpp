#include "nvs/simd/kernels.hpp"

#if NVS_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nvs/parallel.hpp"

#define NVS_AVX2 __attribute__((target("avx2,fma")))

namespace nvs::simd::avx2 {
namespace {

constexpr std::int64_t kKc = 256;
constexpr std::int64_t kMc = 72;
constexpr std::int64_t kNc = 4096;

template <typename T>
struct Tile;

template <>
struct Tile<float> {
  static constexpr int kMr = 6;
  static constexpr int kNr = 16;
};

template <>
struct Tile<double> {
  static constexpr int kMr = 6;
  static constexpr int kNr = 8;
};

template <typename T>
void pack_a(bool trans, const T* a, std::int64_t lda, std::int64_t i0, std::int64_t mb,
            std::int64_t p0, std::int64_t kb, T* dst) {
  constexpr int kMr = Tile<T>::kMr;
  for (std::int64_t ir = 0; ir < mb; ir += kMr) {
    for (std::int64_t p = 0; p < kb; ++p) {
      for (int r = 0; r < kMr; ++r) {
        const std::int64_t i = ir + r;
        T v = T(0);
        if (i < mb) v = trans ? a[(p0 + p) * lda + (i0 + i)] : a[(i0 + i) * lda + (p0 + p)];
        *dst++ = v;
      }
    }
  }
}

template <typename T>
void pack_b(bool trans, const T* b, std::int64_t ldb, std::int64_t p0, std::int64_t kb,
            std::int64_t j0, std::int64_t nb, T* dst) {
  constexpr int kNr = Tile<T>::kNr;
  for (std::int64_t jr = 0; jr < nb; jr += kNr) {
    for (std::int64_t p = 0; p < kb; ++p) {
      for (int c = 0; c < kNr; ++c) {
        const std::int64_t j = jr + c;
        T v = T(0);
        if (j < nb) v = trans ? b[(j0 + j) * ldb + (p0 + p)] : b[(p0 + p) * ldb + (j0 + j)];
        *dst++ = v;
      }
    }
  }
}

NVS_AVX2 void ukernel(std::int64_t kb, const float* ap, const float* bp, float* c,
                      std::int64_t ldc, float alpha, int mr, int nr) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (std::int64_t p = 0; p < kb; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    __m256 a = _mm256_broadcast_ss(ap + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(ap + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(ap + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(ap + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(ap + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(ap + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    ap += 6;
    bp += 16;
  }
  const __m256 acc[6][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                            {c30, c31}, {c40, c41}, {c50, c51}};
  if (mr == 6 && nr == 16) {
    const __m256 va = _mm256_set1_ps(alpha);
    for (int r = 0; r < 6; ++r) {
      float* row = c + r * ldc;
      _mm256_storeu_ps(row, _mm256_fmadd_ps(va, acc[r][0], _mm256_loadu_ps(row)));
      _mm256_storeu_ps(row + 8, _mm256_fmadd_ps(va, acc[r][1], _mm256_loadu_ps(row + 8)));
    }
    return;
  }
  alignas(32) float tmp[6][16];
  for (int r = 0; r < 6; ++r) {
    _mm256_store_ps(tmp[r], acc[r][0]);
    _mm256_store_ps(tmp[r] + 8, acc[r][1]);
  }
  for (int r = 0; r < mr; ++r) {
    float* row = c + r * ldc;
    for (int j = 0; j < nr; ++j) row[j] = std::fma(alpha, tmp[r][j], row[j]);
  }
}

NVS_AVX2 void ukernel(std::int64_t kb, const double* ap, const double* bp, double* c,
                      std::int64_t ldc, double alpha, int mr, int nr) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (std::int64_t p = 0; p < kb; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d a = _mm256_broadcast_sd(ap + 0);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    a = _mm256_broadcast_sd(ap + 4);
    c40 = _mm256_fmadd_pd(a, b0, c40);
    c41 = _mm256_fmadd_pd(a, b1, c41);
    a = _mm256_broadcast_sd(ap + 5);
    c50 = _mm256_fmadd_pd(a, b0, c50);
    c51 = _mm256_fmadd_pd(a, b1, c51);
    ap += 6;
    bp += 8;
  }
  const __m256d acc[6][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                             {c30, c31}, {c40, c41}, {c50, c51}};
  if (mr == 6 && nr == 8) {
    const __m256d va = _mm256_set1_pd(alpha);
    for (int r = 0; r < 6; ++r) {
      double* row = c + r * ldc;
      _mm256_storeu_pd(row, _mm256_fmadd_pd(va, acc[r][0], _mm256_loadu_pd(row)));
      _mm256_storeu_pd(row + 4, _mm256_fmadd_pd(va, acc[r][1], _mm256_loadu_pd(row + 4)));
    }
    return;
  }
  alignas(32) double tmp[6][8];
  for (int r = 0; r < 6; ++r) {
    _mm256_store_pd(tmp[r], acc[r][0]);
    _mm256_store_pd(tmp[r] + 4, acc[r][1]);
  }
  for (int r = 0; r < mr; ++r) {
    double* row = c + r * ldc;
    for (int j = 0; j < nr; ++j) row[j] = std::fma(alpha, tmp[r][j], row[j]);
  }
}

// Single-threaded packed GEMM over columns [j_begin, j_end) of C.
template <typename T>
void gemm_columns(bool trans_a, bool trans_b, std::int64_t m, std::int64_t j_begin,
                  std::int64_t j_end, std::int64_t k, T alpha, const T* a, std::int64_t lda,
                  const T* b, std::int64_t ldb, T* c, std::int64_t ldc) {
  constexpr int kMr = Tile<T>::kMr;
  constexpr int kNr = Tile<T>::kNr;
  thread_local std::vector<T> a_pack;
  thread_local std::vector<T> b_pack;
  for (std::int64_t jc = j_begin; jc < j_end; jc += kNc) {
    const std::int64_t nb = std::min(kNc, j_end - jc);
    for (std::int64_t pc = 0; pc < k; pc += kKc) {
      const std::int64_t kb = std::min(kKc, k - pc);
      b_pack.resize(static_cast<std::size_t>(((nb + kNr - 1) / kNr) * kNr * kb));
      pack_b(trans_b, b, ldb, pc, kb, jc, nb, b_pack.data());
      for (std::int64_t ic = 0; ic < m; ic += kMc) {
        const std::int64_t mb = std::min(kMc, m - ic);
        a_pack.resize(static_cast<std::size_t>(((mb + kMr - 1) / kMr) * kMr * kb));
        pack_a(trans_a, a, lda, ic, mb, pc, kb, a_pack.data());
        for (std::int64_t jr = 0; jr < nb; jr += kNr) {
          for (std::int64_t ir = 0; ir < mb; ir += kMr) {
            ukernel(kb, a_pack.data() + ir * kb, b_pack.data() + jr * kb,
                    c + (ic + ir) * ldc + jc + jr, ldc, alpha,
                    static_cast<int>(std::min<std::int64_t>(kMr, mb - ir)),
                    static_cast<int>(std::min<std::int64_t>(kNr, nb - jr)));
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else if (beta != T(1)) {
      for (std::int64_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (k == 0 || m == 0 || n == 0) return;
  constexpr std::int64_t kNr = Tile<T>::kNr;
  const std::int64_t col_tiles = (n + kNr - 1) / kNr;
  const std::int64_t grain = m * n * k > (std::int64_t{1} << 22) ? 4 : col_tiles;
  parallel_for(0, col_tiles, grain, [&](std::int64_t t0, std::int64_t t1) {
    const std::int64_t j0 = t0 * kNr;
    const std::int64_t j1 = std::min(n, t1 * kNr);
    gemm_columns(trans_a, trans_b, m, j0, j1, k, alpha, a, lda, b, ldb, c, ldc);
  });
}

template <>
NVS_AVX2 void axpy<float>(std::int64_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template <>
NVS_AVX2 void axpy<double>(std::int64_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

#define NVS_BINARY_KERNEL(name, ps_op, pd_op, scalar_expr)                                  \
  template <>                                                                              \
  NVS_AVX2 void name<float>(std::int64_t n, const float* a, const float* b, float* out) {  \
    std::int64_t i = 0;                                                                    \
    for (; i + 8 <= n; i += 8)                                                             \
      _mm256_storeu_ps(out + i, ps_op(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));    \
    for (; i < n; ++i) out[i] = scalar_expr;                                               \
  }                                                                                        \
  template <>                                                                              \
  NVS_AVX2 void name<double>(std::int64_t n, const double* a, const double* b,             \
                             double* out) {                                                \
    std::int64_t i = 0;                                                                    \
    for (; i + 4 <= n; i += 4)                                                             \
      _mm256_storeu_pd(out + i, pd_op(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));    \
    for (; i < n; ++i) out[i] = scalar_expr;                                               \
  }

NVS_BINARY_KERNEL(add, _mm256_add_ps, _mm256_add_pd, a[i] + b[i])
NVS_BINARY_KERNEL(sub, _mm256_sub_ps, _mm256_sub_pd, a[i] - b[i])
NVS_BINARY_KERNEL(mul, _mm256_mul_ps, _mm256_mul_pd, a[i] * b[i])
#undef NVS_BINARY_KERNEL

template <>
NVS_AVX2 void scale<float>(std::int64_t n, float alpha, const float* x, float* out) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template <>
NVS_AVX2 void scale<double>(std::int64_t n, double alpha, const double* x, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, float,
                          const float*, std::int64_t, const float*, std::int64_t, float, float*,
                          std::int64_t);
template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, double,
                           const double*, std::int64_t, const double*, std::int64_t, double,
                           double*, std::int64_t);

}  // namespace nvs::simd::avx2

#endif  // NVS_HAVE_AVX2_KERNELS
