#include <doctest.h>

#include <cmath>
#include <numeric>

#include "advaug/blas.hpp"
#include "advaug/rng.hpp"
#include "advaug/tensor.hpp"

using namespace advaug;

TEST_CASE("tensor indexing is row-major (b,c,h,w)") {
  Tensor t(2, 3, 4, 5);
  t(1, 2, 3, 4) = 7.0f;
  CHECK(t.v[((size_t(1) * 3 + 2) * 4 + 3) * 5 + 4] == 7.0f);
  CHECK(t.numel() == 2u * 3 * 4 * 5);
  CHECK(t.dim() == 3 * 4 * 5);
  CHECK(t.sample(1)[t.dim() - 1] == 7.0f);
}

TEST_CASE("concat_c and split_c are inverses") {
  Rng r(1);
  Tensor a(2, 3, 4, 4), b(2, 5, 4, 4);
  for (auto& x : a.v) x = float(r.normal());
  for (auto& x : b.v) x = float(r.normal());
  Tensor c = concat_c(a, b);
  CHECK(c.c == 8);
  CHECK(c(1, 2, 3, 3) == a(1, 2, 3, 3));
  CHECK(c(1, 6, 0, 1) == b(1, 3, 0, 1));
  Tensor ga(2, 3, 4, 4), gb(2, 5, 4, 4);
  split_c(c, ga, gb);
  CHECK(ga.v == a.v);
  CHECK(gb.v == b.v);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42, 0), b(42, 0), c(42, 1);
  for (int i = 0; i < 100; ++i) CHECK(a.raw() == b.raw());
  bool differs = false;
  Rng a2(42, 0);
  for (int i = 0; i < 100; ++i)
    if (a2.raw() != c.raw()) differs = true;
  CHECK(differs);
}

TEST_CASE("rng state round-trip resumes the exact sequence") {
  Rng a(7, 3);
  for (int i = 0; i < 17; ++i) a.normal();
  std::string s = a.state();
  Rng b;
  b.restore(s);
  for (int i = 0; i < 50; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("rng normal has roughly standard moments") {
  Rng r(123);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng uniform_int covers the range without bias") {
  Rng r(5);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) counts[r.uniform_int(10)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

// oracle: schoolbook matmul in double
static void ref_gemm(bool ta, bool tb, int m, int n, int k, const std::vector<double>& A,
                     const std::vector<double>& B, std::vector<double>& C) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) {
        double a = ta ? A[size_t(p) * m + i] : A[size_t(i) * k + p];
        double b = tb ? B[size_t(j) * k + p] : B[size_t(p) * n + j];
        s += a * b;
      }
      C[size_t(i) * n + j] = s;
    }
}

TEST_CASE("gemm matches the schoolbook reference for all transpose modes") {
  Rng r(9);
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      int m = 7, n = 11, k = 5;
      std::vector<double> A(size_t(m) * k), B(size_t(k) * n), C(size_t(m) * n, 0.5);
      for (auto& x : A) x = r.normal();
      for (auto& x : B) x = r.normal();
      std::vector<double> want(size_t(m) * n);
      ref_gemm(ta, tb, m, n, k, A, B, want);
      // beta=2 on preloaded C, alpha=3
      std::vector<double> got = C;
      blas::gemm(bool(ta), bool(tb), m, n, k, 3.0, A.data(), ta ? m : k, B.data(),
                 tb ? k : n, 2.0, got.data(), n);
      for (size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(3.0 * want[i] + 2.0 * C[i]).epsilon(1e-12));
    }
}

TEST_CASE("float gemm agrees with double within single precision") {
  Rng r(11);
  int m = 13, n = 17, k = 19;
  std::vector<float> A(size_t(m) * k), B(size_t(k) * n), C(size_t(m) * n, 0.f);
  for (auto& x : A) x = float(r.normal());
  for (auto& x : B) x = float(r.normal());
  std::vector<double> Ad(A.begin(), A.end()), Bd(B.begin(), B.end()),
      want(size_t(m) * n);
  ref_gemm(false, false, m, n, k, Ad, Bd, want);
  blas::gemm(false, false, m, n, k, 1.0f, A.data(), k, B.data(), n, 0.0f,
             C.data(), n);
  for (size_t i = 0; i < C.size(); ++i)
    CHECK(double(C[i]) == doctest::Approx(want[i]).epsilon(1e-4));
}
