#pragma once

namespace advaug::blas {

// Row-major C(m,n) = alpha * op(A) * op(B) + beta * C.
// op(A) is A (m,k) when ta is false, A^T of a stored (k,m) when true.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          int lda, const float* B, int ldb, float beta, float* C, int ldc);
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          int lda, const double* B, int ldb, double beta, double* C, int ldc);

// "openblas" when the shared library was bound, "naive" otherwise.
const char* backend();

}  // namespace advaug::blas
