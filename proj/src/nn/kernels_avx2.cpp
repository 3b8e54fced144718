// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "gtsp/nn/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace gtsp::nn::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline void axpy_row(int n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
    _mm256_storeu_pd(y + j + 4, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j + 4), _mm256_loadu_pd(y + j + 4)));
    _mm256_storeu_pd(y + j + 8, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j + 8), _mm256_loadu_pd(y + j + 8)));
    _mm256_storeu_pd(y + j + 12, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j + 12), _mm256_loadu_pd(y + j + 12)));
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += alpha * x[j];
}

// 4 rows x 8 columns register tile.
inline void tile_4x8(int k, int n, const double* a, int lda, const double* b, double* c) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<long>(p) * n;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2L * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3L * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  auto acc = [](double* dst, __m256d v) { _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), v)); };
  acc(c, c00);
  acc(c + 4, c01);
  acc(c + n, c10);
  acc(c + n + 4, c11);
  acc(c + 2L * n, c20);
  acc(c + 2L * n + 4, c21);
  acc(c + 3L * n, c30);
  acc(c + 3L * n + 4, c31);
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  const int n8 = n - n % 8;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    for (int j = 0; j < n8; j += 8) tile_4x8(k, n, a + static_cast<long>(i) * k, k, b + j, c + static_cast<long>(i) * n + j);
  }
  // Leftover rows over the tiled columns.
  for (; i < m; ++i) {
    double* crow = c + static_cast<long>(i) * n;
    for (int p = 0; p < k; ++p) axpy_row(n8, a[static_cast<long>(i) * k + p], b + static_cast<long>(p) * n, crow);
  }
  if (n8 == n) return;
  for (int r = 0; r < m; ++r) {
    for (int j = n8; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[static_cast<long>(r) * k + p] * b[static_cast<long>(p) * n + j];
      c[static_cast<long>(r) * n + j] += s;
    }
  }
}

double dot(int n, const double* a, const double* b) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  if (k < 4) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += a[static_cast<long>(i) * k + p] * b[static_cast<long>(j) * k + p];
        c[static_cast<long>(i) * n + j] += s;
      }
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<long>(i) * k;
    double* crow = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += dot(k, arow, b + static_cast<long>(j) * k);
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<long>(p) * m;
    const double* brow = b + static_cast<long>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av != 0.0) axpy_row(n, av, brow, c + static_cast<long>(i) * n);
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) { axpy_row(n, alpha, x, y); }

constexpr KernelTable kAvx2{"avx2", gemm_nn, gemm_nt, gemm_tn, dot, axpy};

}  // namespace

const KernelTable& table() { return kAvx2; }

}  // namespace gtsp::nn::kernels::avx2

#endif
