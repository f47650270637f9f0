#pragma once
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "advaug/errors.hpp"

namespace advaug {

// Rank-4 (batch, channel, height, width) row-major dense array. Vector batches
// (noise, logits, one-hot) are stored as (B, D, 1, 1).
template <class T>
struct TensorT {
  int b = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  TensorT() = default;
  TensorT(int b_, int c_, int h_, int w_)
      : b(b_), c(c_), h(h_), w(w_), v(size_t(b_) * c_ * h_ * w_, T(0)) {}
  static TensorT vec(int b_, int d) { return TensorT(b_, d, 1, 1); }

  size_t numel() const { return v.size(); }
  int dim() const { return c * h * w; }  // per-sample flat length
  bool same_shape(const TensorT& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* sample(int ib) { return v.data() + size_t(ib) * dim(); }
  const T* sample(int ib) const { return v.data() + size_t(ib) * dim(); }

  T& operator()(int ib, int ic, int iy, int ix) {
    return v[((size_t(ib) * c + ic) * h + iy) * w + ix];
  }
  T operator()(int ib, int ic, int iy, int ix) const {
    return v[((size_t(ib) * c + ic) * h + iy) * w + ix];
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }

  TensorT& operator+=(const TensorT& o) {
    require(same_shape(o), "tensor += shape mismatch");
    for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
  TensorT& operator*=(T s) {
    for (auto& x : v) x *= s;
    return *this;
  }

  bool all_finite() const {
    for (auto x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> o(b, c, h, w);
    for (size_t i = 0; i < v.size(); ++i) o.v[i] = U(v[i]);
    return o;
  }
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

// channel-wise concat: out = [a | b] along c
template <class T>
TensorT<T> concat_c(const TensorT<T>& a, const TensorT<T>& bb) {
  require(a.b == bb.b && a.h == bb.h && a.w == bb.w, "concat_c shape mismatch");
  TensorT<T> o(a.b, a.c + bb.c, a.h, a.w);
  size_t pa = size_t(a.c) * a.h * a.w, pb = size_t(bb.c) * bb.h * bb.w;
  for (int ib = 0; ib < a.b; ++ib) {
    std::copy(a.sample(ib), a.sample(ib) + pa, o.sample(ib));
    std::copy(bb.sample(ib), bb.sample(ib) + pb, o.sample(ib) + pa);
  }
  return o;
}

// inverse of concat_c for gradients
template <class T>
void split_c(const TensorT<T>& g, TensorT<T>& ga, TensorT<T>& gb) {
  require(g.c == ga.c + gb.c && g.b == ga.b, "split_c shape mismatch");
  size_t pa = size_t(ga.c) * ga.h * ga.w, pb = size_t(gb.c) * gb.h * gb.w;
  for (int ib = 0; ib < g.b; ++ib) {
    std::copy(g.sample(ib), g.sample(ib) + pa, ga.sample(ib));
    std::copy(g.sample(ib) + pa, g.sample(ib) + pa + pb, gb.sample(ib));
  }
}

}  // namespace advaug
