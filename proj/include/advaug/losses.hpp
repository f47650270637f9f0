#pragma once
#include <cmath>
#include <string>
#include <vector>

#include "advaug/errors.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

// Probabilities are clamped to [1e-7, 1-1e-7] wherever they enter a log,
// and the reported gradient is taken at the clamped point (finite, at most
// 1e7 in magnitude) rather than zeroed, so a saturated discriminator still
// pushes back.
inline constexpr double kProbEps = 1e-7;

template <class T>
T clamp_prob(T p) {
  if (p < T(kProbEps)) return T(kProbEps);
  if (p > T(1 - kProbEps)) return T(1 - kProbEps);
  return p;
}

template <class T>
struct LossWeights {
  T alpha = 1, beta = 1, gamma = 1;
};

// per-dataset balance of the three generator terms
template <class T>
LossWeights<T> weights_for(const std::string& dataset) {
  if (dataset == "mnist" || dataset == "fmnist") return {T(0.1), T(0.05), T(0.005)};
  if (dataset == "svhn") return {T(1), T(1), T(0.0005)};
  if (dataset == "cifar10") return {T(0.1), T(0.05), T(0.001)};
  throw ConfigError("no loss weights for dataset '" + dataset + "'");
}

struct LossReport {
  double g = 0, dc = 0, dd = 0, c = 0, total = 0;
  double g_alpha = 0, g_beta = 0, g_gamma = 0;  // breakdown of g
};

// total is the exact sum; it is logged, never optimized as one step
inline LossReport loss_total(double g, double dc, double dd, double c) {
  LossReport r;
  r.g = g;
  r.dc = dc;
  r.dd = dd;
  r.c = c;
  r.total = g + dc + dd + c;
  return r;
}

namespace detail {

// -mean(log p): accumulates value, writes d/dp = -1/(B p) scaled by w
template <class T>
double neg_log_mean(const std::vector<T>& p, double w, std::vector<T>& dp) {
  size_t n = p.size();
  if (n == 0) throw DataError("empty probability batch");
  dp.assign(n, T(0));
  double s = 0;
  for (size_t i = 0; i < n; ++i) {
    T pc = clamp_prob(p[i]);
    s -= std::log(double(pc));
    dp[i] = T(-w / (double(n) * double(pc)));
  }
  return w * s / double(n);
}

// -mean(log(1-p)): d/dp = +1/(B (1-p)) scaled by w
template <class T>
double neg_log1m_mean(const std::vector<T>& p, double w, std::vector<T>& dp) {
  size_t n = p.size();
  if (n == 0) throw DataError("empty probability batch");
  dp.assign(n, T(0));
  double s = 0;
  for (size_t i = 0; i < n; ++i) {
    T pc = clamp_prob(p[i]);
    s -= std::log(1.0 - double(pc));
    dp[i] = T(w / (double(n) * (1.0 - double(pc))));
  }
  return w * s / double(n);
}

}  // namespace detail

template <class T>
struct DiscLoss {
  double value = 0;
  std::vector<T> d_real, d_fake;
};

// real/fake discrimination: -E[log D(real)] - E[log(1 - D(fake))]
template <class T>
DiscLoss<T> loss_dc(const std::vector<T>& real, const std::vector<T>& fake) {
  DiscLoss<T> r;
  r.value = detail::neg_log_mean(real, 1.0, r.d_real) +
            detail::neg_log1m_mean(fake, 1.0, r.d_fake);
  return r;
}

// same form over pair judgments: real pair (x_i, x_k), fake pair (x_i, G(x_j))
template <class T>
DiscLoss<T> loss_dd(const std::vector<T>& pair_real, const std::vector<T>& pair_fake) {
  return loss_dc(pair_real, pair_fake);
}

template <class T>
struct GenLoss {
  double value = 0;
  double alpha_term = 0, beta_term = 0, gamma_term = 0;
  std::vector<T> d_dc, d_dd, d_cy;
};

// -a E[log D^C(G)] - b E[log D^D(x, G)] - g E[log(1 - C_y(G))]
template <class T>
GenLoss<T> loss_g(const std::vector<T>& dc_out, const std::vector<T>& dd_out,
                  const std::vector<T>& cls_out_at_label, const LossWeights<T>& w) {
  GenLoss<T> r;
  r.alpha_term = detail::neg_log_mean(dc_out, double(w.alpha), r.d_dc);
  r.beta_term = detail::neg_log_mean(dd_out, double(w.beta), r.d_dd);
  r.gamma_term = detail::neg_log1m_mean(cls_out_at_label, double(w.gamma), r.d_cy);
  r.value = r.alpha_term + r.beta_term + r.gamma_term;
  return r;
}

template <class T>
struct ClsLoss {
  double value = 0;
  std::vector<T> d_real, d_aug;  // (B, n_class) row-major, wrt probabilities
};

// cross entropy on the real batch plus on the augmented batch, both means
template <class T>
ClsLoss<T> loss_c(const std::vector<T>& p_real, const std::vector<T>& p_aug,
                  const std::vector<int>& y, int n_class = 10) {
  size_t b = y.size();
  if (b == 0) throw DataError("empty label batch");
  if (p_real.size() != b * size_t(n_class) || p_aug.size() != b * size_t(n_class))
    throw ShapeError("probability rows do not match " + std::to_string(b) +
                     " labels x " + std::to_string(n_class) + " classes");
  ClsLoss<T> r;
  r.d_real.assign(p_real.size(), T(0));
  r.d_aug.assign(p_aug.size(), T(0));
  double s = 0;
  for (size_t i = 0; i < b; ++i) {
    int yi = y[i];
    if (yi < 0 || yi >= n_class)
      throw DataError("label " + std::to_string(yi) + " outside [0, " +
                      std::to_string(n_class) + ")");
    size_t j = i * size_t(n_class) + size_t(yi);
    T pr = clamp_prob(p_real[j]), pa = clamp_prob(p_aug[j]);
    s -= std::log(double(pr)) + std::log(double(pa));
    r.d_real[j] = T(-1.0 / (double(b) * double(pr)));
    r.d_aug[j] = T(-1.0 / (double(b) * double(pa)));
  }
  r.value = s / double(b);
  return r;
}

template <class T>
struct LogitLoss {
  double value = 0;
  TensorT<T> dlogits;
};

// fused softmax + cross entropy on logits (B, n): mean over the batch,
// dlogits = (softmax - onehot)/B
template <class T>
LogitLoss<T> softmax_ce(const TensorT<T>& logits, const std::vector<int>& y) {
  int b = logits.b, n = logits.numel() / std::max(1, logits.b);
  if (size_t(b) != y.size())
    throw ShapeError("logits batch " + std::to_string(b) + " vs " +
                     std::to_string(y.size()) + " labels");
  LogitLoss<T> r;
  r.dlogits = logits;
  r.dlogits.zero();
  double s = 0;
  for (int i = 0; i < b; ++i) {
    const T* row = logits.v.data() + size_t(i) * n;
    T* drow = r.dlogits.v.data() + size_t(i) * n;
    int yi = y[i];
    if (yi < 0 || yi >= n)
      throw DataError("label " + std::to_string(yi) + " outside [0, " +
                      std::to_string(n) + ")");
    double mx = double(row[0]);
    for (int k = 1; k < n; ++k) mx = std::max(mx, double(row[k]));
    double z = 0;
    for (int k = 0; k < n; ++k) z += std::exp(double(row[k]) - mx);
    double lse = mx + std::log(z);
    s += lse - double(row[yi]);
    for (int k = 0; k < n; ++k)
      drow[k] = T((std::exp(double(row[k]) - lse) - (k == yi ? 1.0 : 0.0)) / b);
  }
  r.value = s / b;
  return r;
}

// fused -g mean(log(1 - softmax(logits)_y)): the generator's fooling term,
// computed from logits so 1 - p_y never cancels. Uses
// log(1 - p_y) = lse(logits without y) - lse(logits); the gradient is
// +g p_y / B at y and -g p_y p_k / ((1 - p_y) B) elsewhere, with
// p_k / (1 - p_y) = exp(logit_k - lse_without_y).
template <class T>
LogitLoss<T> gamma_term(const TensorT<T>& logits, const std::vector<int>& y, T gamma) {
  int b = logits.b, n = logits.numel() / std::max(1, logits.b);
  if (size_t(b) != y.size())
    throw ShapeError("logits batch " + std::to_string(b) + " vs " +
                     std::to_string(y.size()) + " labels");
  LogitLoss<T> r;
  r.dlogits = logits;
  r.dlogits.zero();
  double s = 0;
  for (int i = 0; i < b; ++i) {
    const T* row = logits.v.data() + size_t(i) * n;
    T* drow = r.dlogits.v.data() + size_t(i) * n;
    int yi = y[i];
    if (yi < 0 || yi >= n)
      throw DataError("label " + std::to_string(yi) + " outside [0, " +
                      std::to_string(n) + ")");
    double mx = double(row[0]);
    for (int k = 1; k < n; ++k) mx = std::max(mx, double(row[k]));
    double z = 0, zny = 0;
    for (int k = 0; k < n; ++k) {
      double e = std::exp(double(row[k]) - mx);
      z += e;
      if (k != yi) zny += e;
    }
    double lse = mx + std::log(z);
    double lse_ny = mx + std::log(zny);
    double log1mp = lse_ny - lse;                       // log(1 - p_y), <= 0
    log1mp = std::max(log1mp, std::log(kProbEps));      // same guard as clamp_prob
    s -= log1mp;
    double py = std::exp(double(row[yi]) - lse);
    for (int k = 0; k < n; ++k) {
      if (k == yi)
        drow[k] = T(double(gamma) * py / b);
      else
        drow[k] = T(-double(gamma) * py * std::exp(double(row[k]) - lse_ny) / b);
    }
  }
  r.value = double(gamma) * s / b;
  return r;
}

}  // namespace advaug
