#include "advaug/blas.hpp"

#include <dlfcn.h>
#include <stdlib.h>

#include <cstring>
#include <mutex>

namespace advaug::blas {
namespace {

enum { kRowMajor = 101, kNoTrans = 111, kTrans = 112 };

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*,
                          int, const double*, int, double, double*, int);

sgemm_fn cblas_s = nullptr;
dgemm_fn cblas_d = nullptr;
const char* backend_name = "naive";
std::once_flag init_flag;

void bind_openblas() {
  if (const char* mode = getenv("ADVAUG_BLAS"); mode && !strcmp(mode, "naive"))
    return;
  // OpenBLAS reads these in its constructor, so they must be set before the
  // object loads. The hypervisor masks the CPU model here, which makes the
  // runtime dispatcher fall back to a slow generic kernel; the AVX-512 feature
  // bits are real, so pin the kernel family. overwrite=0 keeps user settings.
  setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
  if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
  if (!h) return;
  cblas_s = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
  cblas_d = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
  if (cblas_s && cblas_d)
    backend_name = "openblas";
  else
    cblas_s = nullptr, cblas_d = nullptr;
}

template <class T>
void naive_gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* A,
                int lda, const T* B, int ldb, T beta, T* C, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = C + size_t(i) * ldc;
    if (beta == T(0))
      std::memset(crow, 0, sizeof(T) * n);
    else if (beta != T(1))
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    for (int p = 0; p < k; ++p) {
      T a = ta ? A[size_t(p) * lda + i] : A[size_t(i) * lda + p];
      a *= alpha;
      if (a == T(0)) continue;
      const T* brow = tb ? nullptr : B + size_t(p) * ldb;
      if (tb) {
        for (int j = 0; j < n; ++j) crow[j] += a * B[size_t(j) * ldb + p];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          int lda, const float* B, int ldb, float beta, float* C, int ldc) {
  std::call_once(init_flag, bind_openblas);
  if (cblas_s)
    cblas_s(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, m, n, k,
            alpha, A, lda, B, ldb, beta, C, ldc);
  else
    naive_gemm(ta, tb, m, n, k, alpha, A, lda, B, ldb, beta, C, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          int lda, const double* B, int ldb, double beta, double* C, int ldc) {
  std::call_once(init_flag, bind_openblas);
  if (cblas_d)
    cblas_d(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, m, n, k,
            alpha, A, lda, B, ldb, beta, C, ldc);
  else
    naive_gemm(ta, tb, m, n, k, alpha, A, lda, B, ldb, beta, C, ldc);
}

const char* backend() {
  std::call_once(init_flag, bind_openblas);
  return backend_name;
}

}  // namespace advaug::blas
