#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advaug/blas.hpp"
#include "advaug/rng.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

// train:  stochastic layers active, batch statistics (running stats updated),
//         backward context recorded.
// sample: same distributional behaviour as train but detached — no context, no
//         running-stat updates. Used for frozen-network forwards.
// eval:   deterministic; dropout off, batch norm uses running statistics.
enum class Mode { train, sample, eval };

inline bool records_ctx(Mode m) { return m == Mode::train; }
inline bool batch_stats(Mode m) { return m != Mode::eval; }

template <class T>
struct ParamRef {
  std::string name;
  std::vector<T>* val;
  std::vector<T>* grad;
};

template <class T>
struct BufRef {
  std::string name;
  std::vector<T>* val;
};

template <class T>
struct Layer {
  std::string name;
  explicit Layer(std::string n) : name(std::move(n)) {}
  virtual ~Layer() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, Mode m, Rng* rng) = 0;
  virtual TensorT<T> backward(const TensorT<T>& dy) = 0;
  virtual void collect(std::vector<ParamRef<T>>&) {}
  virtual void collect_buffers(std::vector<BufRef<T>>&) {}
  virtual void clear_ctx() {}
};

template <class T>
T lrelu_init_std(int fan_in) {
  // He init with the leaky-rectifier gain for slope 0.2
  return T(std::sqrt(2.0 / (1.04 * fan_in)));
}

namespace detail {

template <class T>
void im2col(const T* x, int C, int H, int W, int k, int pad, T* col) {
  // col is (C*k*k, H*W); same-size output (stride 1)
  int HW = H * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (size_t(c) * k * k + size_t(ky) * k + kx) * HW;
        int ox_lo = std::max(0, pad - kx), ox_hi = std::min(W, W + pad - kx);
        for (int oy = 0; oy < H; ++oy) {
          int iy = oy + ky - pad;
          T* dst = row + size_t(oy) * W;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(T) * W);
            continue;
          }
          if (ox_lo > 0) std::memset(dst, 0, sizeof(T) * ox_lo);
          if (ox_hi > ox_lo)
            std::memcpy(dst + ox_lo, x + size_t(c) * HW + size_t(iy) * W + ox_lo + kx - pad,
                        sizeof(T) * (ox_hi - ox_lo));
          if (ox_hi < W) std::memset(dst + ox_hi, 0, sizeof(T) * (W - ox_hi));
        }
      }
}

template <class T>
void col2im_add(const T* col, int C, int H, int W, int k, int pad, T* x) {
  int HW = H * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (size_t(c) * k * k + size_t(ky) * k + kx) * HW;
        int ox_lo = std::max(0, pad - kx), ox_hi = std::min(W, W + pad - kx);
        for (int oy = 0; oy < H; ++oy) {
          int iy = oy + ky - pad;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + size_t(c) * HW + size_t(iy) * W + kx - pad;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += row[size_t(oy) * W + ox];
        }
      }
}

}  // namespace detail

// Weight-shaped parameter pair used by convolution and dense layers. With
// weight normalization the stored tensor is the direction v and the effective
// kernel is g_r * v_r / ||v_r|| per output row; otherwise it is the kernel
// itself and gain stays empty.
template <class T>
struct KernelParam {
  int rows = 0, cols = 0;
  bool wn = false;
  std::vector<T> v, dv, gain, dgain, bias, dbias;
  std::vector<T> eff;     // materialized effective kernel
  std::vector<T> deff;    // per-backward-call scratch

  void init(int rows_, int cols_, bool wn_, Rng& rng, T std, bool with_bias = true) {
    rows = rows_;
    cols = cols_;
    wn = wn_;
    v.assign(size_t(rows) * cols, T(0));
    dv.assign(v.size(), T(0));
    if (with_bias) {
      bias.assign(rows, T(0));
      dbias.assign(rows, T(0));
    }
    for (auto& x : v) x = T(rng.normal()) * std;
    if (wn) {
      gain.assign(rows, T(0));
      dgain.assign(rows, T(0));
      for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int j = 0; j < cols; ++j) s += double(v[size_t(r) * cols + j]) * v[size_t(r) * cols + j];
        gain[r] = T(std::sqrt(s));
      }
      eff.assign(v.size(), T(0));
    }
  }

  void zero_init() {
    require(!wn, "zero_init is for plain kernels");
    std::fill(v.begin(), v.end(), T(0));
    std::fill(bias.begin(), bias.end(), T(0));  // no-op when biasless
  }

  const T* materialize() {
    if (!wn) return v.data();
    for (int r = 0; r < rows; ++r) {
      double s = 0;
      const T* vr = v.data() + size_t(r) * cols;
      for (int j = 0; j < cols; ++j) s += double(vr[j]) * vr[j];
      T scale = gain[r] / T(std::max(std::sqrt(s), 1e-12));
      T* er = eff.data() + size_t(r) * cols;
      for (int j = 0; j < cols; ++j) er[j] = vr[j] * scale;
    }
    return eff.data();
  }

  T* grad_target() {  // where backward accumulates d(effective kernel)
    if (!wn) return dv.data();
    deff.assign(v.size(), T(0));
    return deff.data();
  }

  void project_grad() {  // fold deff into (dv, dgain); linear, so accumulation commutes
    if (!wn) return;
    for (int r = 0; r < rows; ++r) {
      const T* vr = v.data() + size_t(r) * cols;
      const T* de = deff.data() + size_t(r) * cols;
      double s = 0, dot = 0;
      for (int j = 0; j < cols; ++j) s += double(vr[j]) * vr[j];
      double norm = std::max(std::sqrt(s), 1e-12);
      for (int j = 0; j < cols; ++j) dot += double(de[j]) * vr[j] / norm;
      dgain[r] += T(dot);
      T k = gain[r] / T(norm);
      T* dvr = dv.data() + size_t(r) * cols;
      for (int j = 0; j < cols; ++j)
        dvr[j] += k * (de[j] - T(dot) * vr[j] / T(norm));
    }
  }

  void collect(const std::string& base, std::vector<ParamRef<T>>& out) {
    out.push_back({base + (wn ? ".v" : ".w"), &v, &dv});
    if (wn) out.push_back({base + ".g", &gain, &dgain});
    if (!bias.empty()) out.push_back({base + ".b", &bias, &dbias});
  }
};

// 3x3 (pad 1) or 1x1 (pad 0) convolution, stride 1, same-size output.
// Small feature maps are batched into one gemm; 32x32 maps go per sample so
// the gemm result lands directly in the output slice.
template <class T>
struct Conv2d : Layer<T> {
  int in_ch, out_ch, k, pad;
  KernelParam<T> kp;
  std::vector<TensorT<T>> ctx;
  std::vector<T> xcol, ybuf, dybuf, dxcol;

  // with_bias=false drops the channel bias; use it when a BatchNorm follows
  // (the mean subtraction cancels any uniform shift, so the bias is inert).
  Conv2d(std::string n, int ic, int oc, int k_, bool wn, Rng& rng, bool with_bias = true)
      : Layer<T>(std::move(n)), in_ch(ic), out_ch(oc), k(k_), pad(k_ / 2) {
    require(k_ == 1 || k_ == 3, this->name + ": kernel must be 1 or 3");
    kp.init(oc, ic * k_ * k_, wn, rng, lrelu_init_std<T>(ic * k_ * k_), with_bias);
  }

  bool batched_path(int H, int W) const { return H * W <= 256; }

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    if (x.c != in_ch)
      throw ShapeError(this->name + ": expected " + std::to_string(in_ch) +
                       " input channels, got " + x.shape_str());
    int H = x.h, W = x.w, HW = H * W, ick2 = in_ch * k * k;
    TensorT<T> y(x.b, out_ch, H, W);
    const T* Weff = kp.materialize();
    if (!batched_path(H, W)) {
      xcol.resize(size_t(ick2) * HW);
      for (int b = 0; b < x.b; ++b) {
        detail::im2col(x.sample(b), in_ch, H, W, k, pad, xcol.data());
        blas::gemm(false, false, out_ch, HW, ick2, T(1), Weff, ick2, xcol.data(),
                   HW, T(0), y.sample(b), HW);
      }
    } else {
      xcol.resize(size_t(ick2) * x.b * HW);
      dxcol.resize(size_t(ick2) * HW);
      for (int b = 0; b < x.b; ++b) {
        // columns of sample b live at stride x.b*HW per row, offset b*HW
        detail::im2col(x.sample(b), in_ch, H, W, k, pad, dxcol.data());  // reuse scratch
        for (int r = 0; r < ick2; ++r)
          std::memcpy(xcol.data() + size_t(r) * x.b * HW + size_t(b) * HW,
                      dxcol.data() + size_t(r) * HW, sizeof(T) * HW);
      }
      ybuf.resize(size_t(out_ch) * x.b * HW);
      blas::gemm(false, false, out_ch, x.b * HW, ick2, T(1), Weff, ick2,
                 xcol.data(), x.b * HW, T(0), ybuf.data(), x.b * HW);
      for (int b = 0; b < x.b; ++b)
        for (int co = 0; co < out_ch; ++co)
          std::memcpy(y.sample(b) + size_t(co) * HW,
                      ybuf.data() + size_t(co) * x.b * HW + size_t(b) * HW,
                      sizeof(T) * HW);
    }
    if (!kp.bias.empty())
      for (int b = 0; b < x.b; ++b)
        for (int co = 0; co < out_ch; ++co) {
          T* row = y.sample(b) + size_t(co) * HW;
          T bias = kp.bias[co];
          for (int i = 0; i < HW; ++i) row[i] += bias;
        }
    if (records_ctx(m)) ctx.push_back(x);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    TensorT<T> x = std::move(ctx.back());
    ctx.pop_back();
    int H = x.h, W = x.w, HW = H * W, ick2 = in_ch * k * k;
    TensorT<T> dx(x.b, in_ch, H, W);
    const T* Weff = kp.wn ? kp.eff.data() : kp.v.data();
    T* dW = kp.grad_target();
    if (!batched_path(H, W)) {
      xcol.resize(size_t(ick2) * HW);
      dxcol.resize(size_t(ick2) * HW);
      for (int b = 0; b < x.b; ++b) {
        detail::im2col(x.sample(b), in_ch, H, W, k, pad, xcol.data());
        blas::gemm(false, true, out_ch, ick2, HW, T(1), dy.sample(b), HW,
                   xcol.data(), HW, T(1), dW, ick2);
        blas::gemm(true, false, ick2, HW, out_ch, T(1), Weff, ick2,
                   dy.sample(b), HW, T(0), dxcol.data(), HW);
        detail::col2im_add(dxcol.data(), in_ch, H, W, k, pad, dx.sample(b));
      }
    } else {
      xcol.resize(size_t(ick2) * x.b * HW);
      dxcol.resize(size_t(ick2) * HW);
      for (int b = 0; b < x.b; ++b) {
        detail::im2col(x.sample(b), in_ch, H, W, k, pad, dxcol.data());
        for (int r = 0; r < ick2; ++r)
          std::memcpy(xcol.data() + size_t(r) * x.b * HW + size_t(b) * HW,
                      dxcol.data() + size_t(r) * HW, sizeof(T) * HW);
      }
      dybuf.resize(size_t(out_ch) * x.b * HW);
      for (int b = 0; b < x.b; ++b)
        for (int co = 0; co < out_ch; ++co)
          std::memcpy(dybuf.data() + size_t(co) * x.b * HW + size_t(b) * HW,
                      dy.sample(b) + size_t(co) * HW, sizeof(T) * HW);
      blas::gemm(false, true, out_ch, ick2, x.b * HW, T(1), dybuf.data(),
                 x.b * HW, xcol.data(), x.b * HW, T(1), dW, ick2);
      ybuf.resize(size_t(ick2) * x.b * HW);
      blas::gemm(true, false, ick2, x.b * HW, out_ch, T(1), Weff, ick2,
                 dybuf.data(), x.b * HW, T(0), ybuf.data(), x.b * HW);
      for (int b = 0; b < x.b; ++b) {
        for (int r = 0; r < ick2; ++r)
          std::memcpy(dxcol.data() + size_t(r) * HW,
                      ybuf.data() + size_t(r) * x.b * HW + size_t(b) * HW,
                      sizeof(T) * HW);
        detail::col2im_add(dxcol.data(), in_ch, H, W, k, pad, dx.sample(b));
      }
    }
    if (!kp.bias.empty())
      for (int b = 0; b < dy.b; ++b)
        for (int co = 0; co < out_ch; ++co) {
          const T* row = dy.sample(b) + size_t(co) * HW;
          T s = 0;
          for (int i = 0; i < HW; ++i) s += row[i];
          kp.dbias[co] += s;
        }
    kp.project_grad();
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override { kp.collect(this->name, out); }
  void clear_ctx() override { ctx.clear(); }
};

template <class T>
struct Dense : Layer<T> {
  int in_d, out_d;
  KernelParam<T> kp;
  std::vector<TensorT<T>> ctx;

  Dense(std::string n, int in, int out, bool wn, Rng& rng)
      : Layer<T>(std::move(n)), in_d(in), out_d(out) {
    kp.init(out, in, wn, rng, lrelu_init_std<T>(in));
  }

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    if (x.dim() != in_d)
      throw ShapeError(this->name + ": expected dim " + std::to_string(in_d) +
                       ", got " + x.shape_str());
    TensorT<T> y = TensorT<T>::vec(x.b, out_d);
    const T* Weff = kp.materialize();
    blas::gemm(false, true, x.b, out_d, in_d, T(1), x.data(), in_d, Weff, in_d,
               T(0), y.data(), out_d);
    for (int b = 0; b < x.b; ++b)
      for (int o = 0; o < out_d; ++o) y.v[size_t(b) * out_d + o] += kp.bias[o];
    if (records_ctx(m)) ctx.push_back(x);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    TensorT<T> x = std::move(ctx.back());
    ctx.pop_back();
    const T* Weff = kp.wn ? kp.eff.data() : kp.v.data();
    T* dW = kp.grad_target();
    blas::gemm(true, false, out_d, in_d, x.b, T(1), dy.data(), out_d, x.data(),
               in_d, T(1), dW, in_d);
    TensorT<T> dx(x.b, x.c, x.h, x.w);
    blas::gemm(false, false, x.b, in_d, out_d, T(1), dy.data(), out_d, Weff,
               in_d, T(0), dx.data(), in_d);
    for (int b = 0; b < dy.b; ++b)
      for (int o = 0; o < out_d; ++o) kp.dbias[o] += dy.v[size_t(b) * out_d + o];
    kp.project_grad();
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override { kp.collect(this->name, out); }
  void clear_ctx() override { ctx.clear(); }
};

// Linear projection of a vector batch to C full-resolution feature maps; the
// reading of the architecture tables' one-step "HxW deconv. C" rows.
template <class T>
struct VecToMaps : Layer<T> {
  int out_c, out_h, out_w;
  Dense<T> dense;

  VecToMaps(std::string n, int in_d, int oc, int oh, int ow, Rng& rng)
      : Layer<T>(n), out_c(oc), out_h(oh), out_w(ow),
        dense(n + ".proj", in_d, oc * oh * ow, false, rng) {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng* rng) override {
    TensorT<T> y = dense.forward(x, m, rng);
    y.c = out_c;
    y.h = out_h;
    y.w = out_w;
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    TensorT<T> flat = dy;
    flat.c = out_c * out_h * out_w;
    flat.h = flat.w = 1;
    return dense.backward(flat);
  }
  void collect(std::vector<ParamRef<T>>& out) override { dense.collect(out); }
  void clear_ctx() override { dense.clear_ctx(); }
};

template <class T>
struct LReLU : Layer<T> {
  T slope;
  std::vector<std::vector<uint8_t>> ctx;
  explicit LReLU(std::string n, T s = T(0.2)) : Layer<T>(std::move(n)), slope(s) {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    TensorT<T> y = x;
    std::vector<uint8_t> mask;
    if (records_ctx(m)) mask.resize(x.numel());
    for (size_t i = 0; i < y.v.size(); ++i) {
      bool pos = y.v[i] > T(0);
      if (!pos) y.v[i] *= slope;
      if (!mask.empty()) mask[i] = pos;
    }
    if (records_ctx(m)) ctx.push_back(std::move(mask));
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    std::vector<uint8_t> mask = std::move(ctx.back());
    ctx.pop_back();
    TensorT<T> dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
      if (!mask[i]) dx.v[i] *= slope;
    return dx;
  }
  void clear_ctx() override { ctx.clear(); }
};

template <class T>
struct Sigmoid : Layer<T> {
  std::vector<TensorT<T>> ctx;
  explicit Sigmoid(std::string n) : Layer<T>(std::move(n)) {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    TensorT<T> y = x;
    for (auto& v : y.v) v = T(1) / (T(1) + std::exp(-v));
    if (records_ctx(m)) ctx.push_back(y);
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    TensorT<T> y = std::move(ctx.back());
    ctx.pop_back();
    TensorT<T> dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= y.v[i] * (T(1) - y.v[i]);
    return dx;
  }
  void clear_ctx() override { ctx.clear(); }
};

// Inverted dropout: train/sample output is x * mask / (1-p), so the
// expectation equals the eval output.
template <class T>
struct Dropout : Layer<T> {
  T p;
  std::vector<std::vector<uint8_t>> ctx;
  explicit Dropout(std::string n, T p_ = T(0.5)) : Layer<T>(std::move(n)), p(p_) {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng* rng) override {
    if (m == Mode::eval) return x;
    require(rng != nullptr, this->name + ": dropout needs an rng in train mode");
    TensorT<T> y = x;
    std::vector<uint8_t> mask(x.numel());
    T scale = T(1) / (T(1) - p);
    for (size_t i = 0; i < y.v.size(); ++i) {
      mask[i] = rng->uniform() >= double(p);
      y.v[i] = mask[i] ? y.v[i] * scale : T(0);
    }
    if (records_ctx(m)) ctx.push_back(std::move(mask));
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    std::vector<uint8_t> mask = std::move(ctx.back());
    ctx.pop_back();
    TensorT<T> dx = dy;
    T scale = T(1) / (T(1) - p);
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] = mask[i] ? dx.v[i] * scale : T(0);
    return dx;
  }
  void clear_ctx() override { ctx.clear(); }
};

template <class T>
struct BatchNorm2d : Layer<T> {
  int ch;
  T momentum = T(0.1), eps = T(1e-5);
  bool freeze_running = false;  // set during finite-difference checks
  std::vector<T> gamma, dgamma, beta, dbeta, run_mean, run_var;
  struct Ctx {
    TensorT<T> xhat;
    std::vector<T> invstd;
  };
  std::vector<Ctx> ctx;

  BatchNorm2d(std::string n, int c) : Layer<T>(std::move(n)), ch(c) {
    gamma.assign(c, T(1));
    dgamma.assign(c, T(0));
    beta.assign(c, T(0));
    dbeta.assign(c, T(0));
    run_mean.assign(c, T(0));
    run_var.assign(c, T(1));
  }

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    if (x.c != ch) throw ShapeError(this->name + ": channel mismatch " + x.shape_str());
    int HW = x.h * x.w;
    size_t n = size_t(x.b) * HW;
    TensorT<T> y(x.b, x.c, x.h, x.w);
    Ctx cx;
    if (records_ctx(m)) {
      cx.xhat = TensorT<T>(x.b, x.c, x.h, x.w);
      cx.invstd.assign(ch, T(0));
    }
    for (int c = 0; c < ch; ++c) {
      T mean, var;
      if (batch_stats(m)) {
        double s = 0;
        for (int b = 0; b < x.b; ++b) {
          const T* row = x.sample(b) + size_t(c) * HW;
          for (int i = 0; i < HW; ++i) s += row[i];
        }
        mean = T(s / double(n));
        double q = 0;
        for (int b = 0; b < x.b; ++b) {
          const T* row = x.sample(b) + size_t(c) * HW;
          for (int i = 0; i < HW; ++i) {
            double d = double(row[i]) - double(mean);
            q += d * d;
          }
        }
        var = T(q / double(n));  // biased, used consistently for running stats too
        if (m == Mode::train && !freeze_running) {
          run_mean[c] = (T(1) - momentum) * run_mean[c] + momentum * mean;
          run_var[c] = (T(1) - momentum) * run_var[c] + momentum * var;
        }
      } else {
        mean = run_mean[c];
        var = run_var[c];
      }
      T invstd = T(1) / std::sqrt(var + eps);
      if (records_ctx(m)) cx.invstd[c] = invstd;
      for (int b = 0; b < x.b; ++b) {
        const T* row = x.sample(b) + size_t(c) * HW;
        T* out = y.sample(b) + size_t(c) * HW;
        T* xh = records_ctx(m) ? cx.xhat.sample(b) + size_t(c) * HW : nullptr;
        for (int i = 0; i < HW; ++i) {
          T h = (row[i] - mean) * invstd;
          if (xh) xh[i] = h;
          out[i] = gamma[c] * h + beta[c];
        }
      }
    }
    if (records_ctx(m)) ctx.push_back(std::move(cx));
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    Ctx cx = std::move(ctx.back());
    ctx.pop_back();
    int HW = dy.h * dy.w;
    size_t n = size_t(dy.b) * HW;
    TensorT<T> dx(dy.b, dy.c, dy.h, dy.w);
    for (int c = 0; c < ch; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int b = 0; b < dy.b; ++b) {
        const T* gr = dy.sample(b) + size_t(c) * HW;
        const T* xh = cx.xhat.sample(b) + size_t(c) * HW;
        for (int i = 0; i < HW; ++i) {
          sum_dy += gr[i];
          sum_dy_xhat += double(gr[i]) * xh[i];
        }
      }
      dbeta[c] += T(sum_dy);
      dgamma[c] += T(sum_dy_xhat);
      T k = gamma[c] * cx.invstd[c] / T(n);
      for (int b = 0; b < dy.b; ++b) {
        const T* gr = dy.sample(b) + size_t(c) * HW;
        const T* xh = cx.xhat.sample(b) + size_t(c) * HW;
        T* out = dx.sample(b) + size_t(c) * HW;
        for (int i = 0; i < HW; ++i)
          out[i] = k * (T(n) * gr[i] - T(sum_dy) - xh[i] * T(sum_dy_xhat));
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->name + ".gamma", &gamma, &dgamma});
    out.push_back({this->name + ".beta", &beta, &dbeta});
  }
  void collect_buffers(std::vector<BufRef<T>>& out) override {
    out.push_back({this->name + ".run_mean", &run_mean});
    out.push_back({this->name + ".run_var", &run_var});
  }
  void clear_ctx() override { ctx.clear(); }
};

template <class T>
struct MaxPool2x2 : Layer<T> {
  std::vector<std::vector<uint8_t>> ctx;  // winner position 0..3 per output cell
  std::vector<std::array<int, 4>> shapes;
  explicit MaxPool2x2(std::string n) : Layer<T>(std::move(n)) {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    require(x.h % 2 == 0 && x.w % 2 == 0, this->name + ": odd input size");
    int OH = x.h / 2, OW = x.w / 2;
    TensorT<T> y(x.b, x.c, OH, OW);
    std::vector<uint8_t> arg;
    if (records_ctx(m)) arg.resize(y.numel());
    size_t idx = 0;
    for (int b = 0; b < x.b; ++b)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox, ++idx) {
            T best = x(b, c, 2 * oy, 2 * ox);
            uint8_t wk = 0;
            for (uint8_t k = 1; k < 4; ++k) {
              T v = x(b, c, 2 * oy + (k >> 1), 2 * ox + (k & 1));
              if (v > best) best = v, wk = k;
            }
            y(b, c, oy, ox) = best;
            if (!arg.empty()) arg[idx] = wk;
          }
    if (records_ctx(m)) {
      ctx.push_back(std::move(arg));
      shapes.push_back({x.b, x.c, x.h, x.w});
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (ctx.empty()) throw StateError(this->name + ": backward without forward");
    std::vector<uint8_t> arg = std::move(ctx.back());
    ctx.pop_back();
    auto sh = shapes.back();
    shapes.pop_back();
    TensorT<T> dx(sh[0], sh[1], sh[2], sh[3]);
    size_t idx = 0;
    for (int b = 0; b < dy.b; ++b)
      for (int c = 0; c < dy.c; ++c)
        for (int oy = 0; oy < dy.h; ++oy)
          for (int ox = 0; ox < dy.w; ++ox, ++idx) {
            uint8_t k = arg[idx];
            dx(b, c, 2 * oy + (k >> 1), 2 * ox + (k & 1)) += dy(b, c, oy, ox);
          }
    return dx;
  }
  void clear_ctx() override { ctx.clear(); shapes.clear(); }
};

template <class T>
struct UpsampleNN2x : Layer<T> {
  explicit UpsampleNN2x(std::string n) : Layer<T>(std::move(n)) {}
  TensorT<T> forward(const TensorT<T>& x, Mode, Rng*) override {
    TensorT<T> y(x.b, x.c, x.h * 2, x.w * 2);
    for (int b = 0; b < x.b; ++b)
      for (int c = 0; c < x.c; ++c)
        for (int iy = 0; iy < x.h; ++iy)
          for (int ix = 0; ix < x.w; ++ix) {
            T v = x(b, c, iy, ix);
            y(b, c, 2 * iy, 2 * ix) = v;
            y(b, c, 2 * iy, 2 * ix + 1) = v;
            y(b, c, 2 * iy + 1, 2 * ix) = v;
            y(b, c, 2 * iy + 1, 2 * ix + 1) = v;
          }
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    TensorT<T> dx(dy.b, dy.c, dy.h / 2, dy.w / 2);
    for (int b = 0; b < dy.b; ++b)
      for (int c = 0; c < dy.c; ++c)
        for (int iy = 0; iy < dx.h; ++iy)
          for (int ix = 0; ix < dx.w; ++ix)
            dx(b, c, iy, ix) = dy(b, c, 2 * iy, 2 * ix) + dy(b, c, 2 * iy, 2 * ix + 1) +
                               dy(b, c, 2 * iy + 1, 2 * ix) + dy(b, c, 2 * iy + 1, 2 * ix + 1);
    return dx;
  }
};

// Flattens (B,C,H,W) to (B,C*H*W); pure reshape
template <class T>
struct Flatten : Layer<T> {
  std::vector<std::array<int, 4>> shapes;
  explicit Flatten(std::string n) : Layer<T>(std::move(n)) {}
  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng*) override {
    TensorT<T> y = x;
    y.c = x.dim();
    y.h = y.w = 1;
    if (records_ctx(m)) shapes.push_back({x.b, x.c, x.h, x.w});
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) override {
    if (shapes.empty()) throw StateError(this->name + ": backward without forward");
    auto sh = shapes.back();
    shapes.pop_back();
    TensorT<T> dx = dy;
    dx.b = sh[0];
    dx.c = sh[1];
    dx.h = sh[2];
    dx.w = sh[3];
    return dx;
  }
  void clear_ctx() override { shapes.clear(); }
};

// Sequential container; backward runs layers in reverse.
template <class T>
struct Net {
  std::vector<std::unique_ptr<Layer<T>>> layers;

  template <class L, class... Args>
  L* add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = p.get();
    layers.push_back(std::move(p));
    return raw;
  }

  TensorT<T> forward(TensorT<T> x, Mode m, Rng* rng) {
    for (auto& l : layers) x = l->forward(x, m, rng);
    return x;
  }
  TensorT<T> backward(TensorT<T> dy) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) dy = (*it)->backward(dy);
    return dy;
  }
  void collect(std::vector<ParamRef<T>>& out) {
    for (auto& l : layers) l->collect(out);
  }
  void collect_buffers(std::vector<BufRef<T>>& out) {
    for (auto& l : layers) l->collect_buffers(out);
  }
  void clear_ctx() {
    for (auto& l : layers) l->clear_ctx();
  }
};

template <class T>
void zero_grads(std::vector<ParamRef<T>>& ps) {
  for (auto& p : ps) std::fill(p.grad->begin(), p.grad->end(), T(0));
}

// Adam with bias correction; moments aligned to the parameter list order.
template <class T>
struct Adam {
  T lr, b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
  long t = 0;
  std::vector<std::vector<T>> m, v;

  explicit Adam(T lr_ = T(5e-4)) : lr(lr_) {}

  void step(std::vector<ParamRef<T>>& ps) {
    if (m.empty()) {
      for (auto& p : ps) {
        m.emplace_back(p.val->size(), T(0));
        v.emplace_back(p.val->size(), T(0));
      }
    }
    require(m.size() == ps.size(), "adam: parameter list changed");
    ++t;
    T c1 = T(1) - T(std::pow(double(b1), double(t)));
    T c2 = T(1) - T(std::pow(double(b2), double(t)));
    for (size_t i = 0; i < ps.size(); ++i) {
      auto& val = *ps[i].val;
      auto& g = *ps[i].grad;
      for (size_t j = 0; j < val.size(); ++j) {
        if (!std::isfinite(double(g[j])))
          throw DivergenceError("non-finite gradient in " + ps[i].name);
        m[i][j] = b1 * m[i][j] + (T(1) - b1) * g[j];
        v[i][j] = b2 * v[i][j] + (T(1) - b2) * g[j] * g[j];
        val[j] -= lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
  }
};

// ---- finite-difference checking ----

struct GradGroupReport {
  std::string name;
  double max_rel_err = 0;
  int checked = 0;
};

struct GradCheckReport {
  std::vector<GradGroupReport> groups;
  double max_rel_err = 0;
  std::string worst;

  bool pass(double tol) const { return max_rel_err < tol; }
};

inline double rel_err(double a, double b) {
  double m = std::max(std::abs(a), std::abs(b));
  if (m < 1e-7) return 0;
  return std::abs(a - b) / m;
}

// f() must zero the gradients, run forward+backward deterministically and
// return the loss. Central differences at the given step, sampled coordinates
// per parameter group. A coordinate that disagrees at the base step is
// re-measured at two shifted steps and the best agreement wins: piecewise
// activations (bilinear cells, leaky relu, pool argmax) put derivative jumps
// under the stencil at isolated step sizes, while a wrong analytic gradient
// disagrees at every step.
template <class T, class F>
GradCheckReport grad_check(std::vector<ParamRef<T>> ps, F f, double h,
                           int per_group, Rng& pick) {
  GradCheckReport rep;
  double base = f();
  (void)base;
  std::vector<std::vector<T>> saved_grads;
  for (auto& p : ps) saved_grads.push_back(*p.grad);
  for (size_t i = 0; i < ps.size(); ++i) {
    GradGroupReport g{ps[i].name, 0.0, 0};
    size_t n = ps[i].val->size();
    if (n == 0) {
      rep.groups.push_back(g);
      continue;
    }
    auto measure = [&](size_t j, double step) {
      T orig = (*ps[i].val)[j];
      (*ps[i].val)[j] = orig + T(step);
      double lp = f();
      (*ps[i].val)[j] = orig - T(step);
      double lm = f();
      (*ps[i].val)[j] = orig;
      return (lp - lm) / (2 * step);
    };
    int probes = int(std::min<size_t>(per_group, n));
    for (int k = 0; k < probes; ++k) {
      size_t j = (n <= size_t(per_group)) ? size_t(k) : size_t(pick.uniform_int(n));
      double ana = double(saved_grads[i][j]);
      double e = rel_err(ana, measure(j, h));
      // the ladder spans two failure regimes: small steps dodge derivative
      // jumps but drown small gradients in evaluation noise, large steps do
      // the opposite; the lowest rungs rescue base points sitting almost
      // exactly on a kink
      for (double scale : {0.37, 0.037, 0.0037, 2.9, 37.0, 290.0}) {
        if (e <= 1e-6) break;
        e = std::min(e, rel_err(ana, measure(j, h * scale)));
      }
      if (e > g.max_rel_err) g.max_rel_err = e;
      ++g.checked;
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst = ps[i].name;
      }
    }
    rep.groups.push_back(g);
  }
  f();  // leave gradients consistent with the unperturbed point
  return rep;
}

}  // namespace advaug
