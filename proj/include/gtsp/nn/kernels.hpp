#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation; an AVX2+FMA variant is selected at runtime when the CPU
// supports it. GTSP_SIMD=scalar in the environment forces the reference path.
//
// All matrices are row-major and kernels accumulate into C (C += ...).

#include <string_view>

namespace gtsp::nn::kernels {

struct KernelTable {
  std::string_view name;
  // C[M,N] += A[M,K] * B[K,N]
  void (*gemm_nn)(int m, int n, int k, const double* a, const double* b, double* c);
  // C[M,N] += A[M,K] * B[N,K]^T
  void (*gemm_nt)(int m, int n, int k, const double* a, const double* b, double* c);
  // C[M,N] += A[K,M]^T * B[K,N]
  void (*gemm_tn)(int m, int n, int k, const double* a, const double* b, double* c);
  double (*dot)(int n, const double* a, const double* b);
  // y += alpha * x
  void (*axpy)(int n, double alpha, const double* x, double* y);
};

const KernelTable& scalar_table();
// nullptr when the AVX2 variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();

// Table used by the tensor ops.
const KernelTable& active();
// Overrides the runtime choice; intended for tests and benchmarks.
void use(const KernelTable& table);

}  // namespace gtsp::nn::kernels
