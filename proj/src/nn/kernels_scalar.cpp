#include "gtsp/nn/kernels.hpp"

namespace gtsp::nn::kernels {
namespace {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<long>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<long>(i) * k + p];
      const double* brow = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<long>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<long>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<long>(i) * n + j] += s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<long>(p) * m;
    const double* brow = b + static_cast<long>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double dot(int n, const double* a, const double* b) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(int n, double alpha, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr KernelTable kScalar{"scalar", gemm_nn, gemm_nt, gemm_tn, dot, axpy};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace gtsp::nn::kernels
