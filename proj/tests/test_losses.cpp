#include <doctest.h>

#include <cmath>
#include <vector>

#include "advaug/losses.hpp"
#include "advaug/models.hpp"

using namespace advaug;

namespace {

std::vector<double> rand_probs(Rng& rng, size_t n, double lo = 0.05, double hi = 0.95) {
  std::vector<double> p(n);
  for (auto& v : p) v = lo + rng.uniform() * (hi - lo);
  return p;
}

TensorT<double> rand_img(int b, int c, Rng& rng) {
  TensorT<double> x(b, c, 32, 32);
  for (auto& v : x.v) v = rng.uniform() * 2 - 1;
  return x;
}

}  // namespace

TEST_CASE("generator loss closed form: all probabilities one half, unit weights") {
  std::vector<double> half{0.5, 0.5, 0.5};
  LossWeights<double> w{1, 1, 1};
  auto r = loss_g(half, half, half, w);
  CHECK(std::abs(r.value - 3 * std::log(2.0)) < 1e-9);
  CHECK(std::abs(r.alpha_term - std::log(2.0)) < 1e-9);
  CHECK(std::abs(r.beta_term - std::log(2.0)) < 1e-9);
  CHECK(std::abs(r.gamma_term - std::log(2.0)) < 1e-9);
}

TEST_CASE("per-dataset weights") {
  auto c = weights_for<double>("cifar10");
  CHECK(c.alpha == 0.1);
  CHECK(c.beta == 0.05);
  CHECK(c.gamma == 0.001);
  auto m = weights_for<double>("mnist");
  CHECK(m.alpha == 0.1);
  CHECK(m.beta == 0.05);
  CHECK(m.gamma == 0.005);
  auto f = weights_for<double>("fmnist");
  CHECK(f.alpha == m.alpha);
  CHECK(f.beta == m.beta);
  CHECK(f.gamma == m.gamma);
  auto s = weights_for<double>("svhn");
  CHECK(s.alpha == 1.0);
  CHECK(s.beta == 1.0);
  CHECK(s.gamma == 0.0005);
  CHECK_THROWS_AS(weights_for<double>("imagenet"), ConfigError);
}

TEST_CASE("generator loss gradients match calculus") {
  Rng rng(41, 0);
  LossWeights<double> w{0.7, 0.3, 0.11};
  auto dc = rand_probs(rng, 5), dd = rand_probs(rng, 5), cy = rand_probs(rng, 5);
  auto r = loss_g(dc, dd, cy, w);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(r.d_dc[i] - (-w.alpha / (5 * dc[i]))) < 1e-6);
    CHECK(std::abs(r.d_dd[i] - (-w.beta / (5 * dd[i]))) < 1e-6);
    CHECK(std::abs(r.d_cy[i] - (w.gamma / (5 * (1 - cy[i])))) < 1e-6);
  }
  // batch of one: the per-probability forms without the mean factor
  std::vector<double> p1{0.37};
  auto r1 = loss_g(p1, p1, p1, w);
  CHECK(std::abs(r1.d_dc[0] - (-w.alpha / 0.37)) < 1e-9);
  CHECK(std::abs(r1.d_dd[0] - (-w.beta / 0.37)) < 1e-9);
  CHECK(std::abs(r1.d_cy[0] - (w.gamma / 0.63)) < 1e-9);
}

TEST_CASE("generator loss gradients match finite differences") {
  Rng rng(42, 0);
  LossWeights<double> w{0.25, 0.5, 0.05};
  auto dc = rand_probs(rng, 4), dd = rand_probs(rng, 4), cy = rand_probs(rng, 4);
  auto base = loss_g(dc, dd, cy, w);
  double h = 1e-7;
  for (size_t i = 0; i < 4; ++i) {
    auto probe = [&](std::vector<double>& v, size_t j) {
      double orig = v[j];
      v[j] = orig + h;
      double lp = loss_g(dc, dd, cy, w).value;
      v[j] = orig - h;
      double lm = loss_g(dc, dd, cy, w).value;
      v[j] = orig;
      return (lp - lm) / (2 * h);
    };
    CHECK(std::abs(probe(dc, i) - base.d_dc[i]) < 1e-6);
    CHECK(std::abs(probe(dd, i) - base.d_dd[i]) < 1e-6);
    CHECK(std::abs(probe(cy, i) - base.d_cy[i]) < 1e-6);
  }
}

TEST_CASE("discriminator loss closed forms") {
  std::vector<double> half{0.5, 0.5};
  auto r = loss_dc(half, half);
  CHECK(std::abs(r.value - 2 * std::log(2.0)) < 1e-9);

  // perfect discrimination: only the clamp keeps the value above zero
  std::vector<double> ones{1.0, 1.0}, zeros{0.0, 0.0};
  auto opt = loss_dc(ones, zeros);
  CHECK(opt.value > 0);
  CHECK(std::abs(opt.value - 2 * (-std::log(1 - 1e-7))) < 1e-12);
  CHECK(opt.value < 1e-6);

  auto rd = loss_dd(half, half);
  CHECK(std::abs(rd.value - 2 * std::log(2.0)) < 1e-9);
  auto od = loss_dd(ones, zeros);
  CHECK(od.value < 1e-6);
}

TEST_CASE("discriminator loss gradients: sign and magnitude") {
  Rng rng(43, 0);
  auto real = rand_probs(rng, 6), fake = rand_probs(rng, 6);
  auto r = loss_dc(real, fake);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(r.d_real[i] - (-1.0 / (6 * real[i]))) < 1e-9);
    CHECK(std::abs(r.d_fake[i] - (1.0 / (6 * (1 - fake[i])))) < 1e-9);
    CHECK(r.d_real[i] < 0);  // pushes real judgments up
    CHECK(r.d_fake[i] > 0);  // pushes fake judgments down
  }
}

TEST_CASE("adversary and generator pull the fake judgment in opposite directions") {
  LossWeights<double> w{1, 1, 1};
  for (double p : {0.1, 0.31, 0.5, 0.77, 0.9}) {
    std::vector<double> v{p};
    auto g = loss_g(v, v, v, w);
    auto d = loss_dc(v, v);
    CHECK(g.d_dc[0] * d.d_fake[0] < 0);
  }
}

TEST_CASE("classifier loss closed forms and log-lookup oracle") {
  int b = 4, n = 10;
  std::vector<int> y{3, 1, 9, 0};
  std::vector<double> uniform(size_t(b) * n, 0.1);
  auto r = loss_c(uniform, uniform, y);
  CHECK(std::abs(r.value - 2 * std::log(10.0)) < 1e-9);

  // one-hot correct: only the clamp keeps it above zero
  std::vector<double> hot(size_t(b) * n, 0.0);
  for (int i = 0; i < b; ++i) hot[size_t(i) * n + y[i]] = 1.0;
  auto ropt = loss_c(hot, hot, y);
  CHECK(ropt.value > 0);
  CHECK(ropt.value < 3e-7);

  Rng rng(44, 0);
  auto pr = rand_probs(rng, size_t(b) * n), pa = rand_probs(rng, size_t(b) * n);
  auto rr = loss_c(pr, pa, y);
  double manual = 0;
  for (int i = 0; i < b; ++i)
    manual -= std::log(pr[size_t(i) * n + y[i]]) + std::log(pa[size_t(i) * n + y[i]]);
  manual /= b;
  CHECK(std::abs(rr.value - manual) < 1e-7);
  // gradient lives only at the label entries
  for (int i = 0; i < b; ++i)
    for (int k = 0; k < n; ++k) {
      double g = rr.d_real[size_t(i) * n + k];
      if (k == y[i])
        CHECK(std::abs(g - (-1.0 / (b * pr[size_t(i) * n + k]))) < 1e-9);
      else
        CHECK(g == 0.0);
    }

  CHECK_THROWS_AS(loss_c(pr, pa, std::vector<int>{3, 1, 9, 10}), DataError);
  CHECK_THROWS_AS(loss_c(std::vector<double>(8, 0.1), pa, y), ShapeError);
}

TEST_CASE("total is the exact sum of the four parts") {
  auto r = loss_total(1, 2, 3, 4);
  CHECK(r.total == 10.0);
  auto z = loss_total(0, 0, 0, 0);
  CHECK(z.total == 0.0);
  Rng rng(45, 0);
  for (int t = 0; t < 20; ++t) {
    double a = rng.uniform() * 5, b = rng.uniform() * 5, c = rng.uniform() * 5,
           d = rng.uniform() * 5;
    auto s = loss_total(a, b, c, d);
    CHECK(s.total == a + b + c + d);
    CHECK(s.g == a);
    CHECK(s.dc == b);
    CHECK(s.dd == c);
    CHECK(s.c == d);
  }
}

TEST_CASE("losses stay nonnegative on any probability input") {
  Rng rng(46, 0);
  LossWeights<double> w{0.1, 0.05, 0.005};
  for (int t = 0; t < 50; ++t) {
    auto a = rand_probs(rng, 3, 0.0, 1.0), b = rand_probs(rng, 3, 0.0, 1.0);
    auto c = rand_probs(rng, 3, 0.0, 1.0);
    CHECK(loss_g(a, b, c, w).value >= 0);
    CHECK(loss_dc(a, b).value >= 0);
    CHECK(loss_dd(a, b).value >= 0);
  }
  CHECK_THROWS_AS(loss_dc(std::vector<double>{}, std::vector<double>{0.5}), DataError);
}

TEST_CASE("fused softmax cross entropy matches the definition and finite differences") {
  Rng rng(47, 0);
  int b = 3, n = 10;
  TensorT<double> logits = TensorT<double>::vec(b, n);
  for (auto& v : logits.v) v = rng.normal() * 2;
  std::vector<int> y{7, 0, 4};

  auto r = softmax_ce(logits, y);
  double manual = 0;
  for (int i = 0; i < b; ++i) {
    const double* row = logits.v.data() + size_t(i) * n;
    double mx = *std::max_element(row, row + n), z = 0;
    for (int k = 0; k < n; ++k) z += std::exp(row[k] - mx);
    manual += mx + std::log(z) - row[y[i]];
  }
  CHECK(std::abs(r.value - manual / b) < 1e-12);

  // rows of (softmax - onehot)/B sum to zero
  for (int i = 0; i < b; ++i) {
    double s = 0;
    for (int k = 0; k < n; ++k) s += r.dlogits.v[size_t(i) * n + k];
    CHECK(std::abs(s) < 1e-15);
  }

  double h = 1e-6;
  for (size_t j = 0; j < logits.v.size(); j += 7) {
    double orig = logits.v[j];
    logits.v[j] = orig + h;
    double lp = softmax_ce(logits, y).value;
    logits.v[j] = orig - h;
    double lm = softmax_ce(logits, y).value;
    logits.v[j] = orig;
    CHECK(std::abs((lp - lm) / (2 * h) - r.dlogits.v[j]) < 1e-6);
  }

  CHECK_THROWS_AS(softmax_ce(logits, std::vector<int>{1, 2}), ShapeError);
  CHECK_THROWS_AS(softmax_ce(logits, std::vector<int>{1, 2, 10}), DataError);
}

TEST_CASE("fused fooling term matches the probability-space form") {
  Rng rng(48, 0);
  int b = 4, n = 10;
  double gamma = 0.005;
  TensorT<double> logits = TensorT<double>::vec(b, n);
  for (auto& v : logits.v) v = rng.normal() * 2;
  std::vector<int> y{2, 2, 8, 5};

  auto r = gamma_term(logits, y, gamma);

  // probability-space reference through softmax rows
  double manual = 0;
  std::vector<double> py(b);
  for (int i = 0; i < b; ++i) {
    const double* row = logits.v.data() + size_t(i) * n;
    double mx = *std::max_element(row, row + n), z = 0;
    for (int k = 0; k < n; ++k) z += std::exp(row[k] - mx);
    py[i] = std::exp(row[y[i]] - mx) / z;
    manual -= std::log(1 - py[i]);
  }
  CHECK(std::abs(r.value - gamma * manual / b) < 1e-12);

  double h = 1e-6;
  for (size_t j = 0; j < logits.v.size(); ++j) {
    double orig = logits.v[j];
    logits.v[j] = orig + h;
    double lp = gamma_term(logits, y, gamma).value;
    logits.v[j] = orig - h;
    double lm = gamma_term(logits, y, gamma).value;
    logits.v[j] = orig;
    CHECK(std::abs((lp - lm) / (2 * h) - r.dlogits.v[j]) < 1e-8);
  }

  // a confident correct prediction saturates at the clamp, stays finite, and
  // still pushes the label logit down
  TensorT<double> sat = TensorT<double>::vec(1, n);
  sat.zero();
  sat.v[0] = 100;
  auto rs = gamma_term(sat, std::vector<int>{0}, gamma);
  CHECK(std::isfinite(rs.value));
  CHECK(std::abs(rs.value - gamma * (-std::log(1e-7))) < 1e-9);
  CHECK(rs.dlogits.v[0] > 0);
  for (int k = 1; k < n; ++k) CHECK(rs.dlogits.v[k] < 0);
}

TEST_CASE("class discriminator loss gradients match finite differences end to end") {
  Rng rng(51, 0);
  ClassDisc<double> dc(1, 0.125, rng);
  Rng data_rng(52, 0);
  auto xr = rand_img(2, 1, data_rng);
  auto xf = rand_img(2, 1, data_rng);
  std::vector<int> y{4, 9};

  auto ps = dc.params();
  for (auto& p : ps)
    for (size_t j = 0; j < p.val->size(); j += 3) (*p.val)[j] += 0.01 * double(int(j % 5) - 2);

  auto f = [&]() {
    zero_grads(ps);
    dc.clear_ctx();
    Rng drop(53, 0);
    auto pr = dc.forward(xr, y, Mode::train, &drop);
    auto pf = dc.forward(xf, y, Mode::train, &drop);
    auto l = loss_dc(pr.v, pf.v);
    TensorT<double> dpf = pf;
    dpf.v = l.d_fake;
    dc.backward(dpf);  // fake forward was last in, so it backs out first
    TensorT<double> dpr = pr;
    dpr.v = l.d_real;
    dc.backward(dpr);
    return l.value;
  };
  Rng pick(54, 0);
  auto rep = grad_check(ps, f, 1e-6, 2, pick);
  INFO("worst group: ", rep.worst);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("dissimilarity discriminator loss gradients match finite differences end to end") {
  Rng rng(55, 0);
  DissimDisc<double> dd(1, 0.125, rng);
  Rng data_rng(56, 0);
  auto xi = rand_img(2, 1, data_rng);
  auto xk = rand_img(2, 1, data_rng);
  auto xg = rand_img(2, 1, data_rng);

  auto ps = dd.params();
  for (auto& p : ps)
    for (size_t j = 0; j < p.val->size(); j += 3) (*p.val)[j] += 0.01 * double(int(j % 5) - 2);

  auto f = [&]() {
    zero_grads(ps);
    dd.clear_ctx();
    Rng drop(57, 0);
    auto pr = dd.forward(xi, xk, Mode::train, &drop);
    auto pf = dd.forward(xi, xg, Mode::train, &drop);
    auto l = loss_dd(pr.v, pf.v);
    TensorT<double> dpf = pf;
    dpf.v = l.d_fake;
    dd.backward(dpf);
    TensorT<double> dpr = pr;
    dpr.v = l.d_real;
    dd.backward(dpr);
    return l.value;
  };
  Rng pick(58, 0);
  auto rep = grad_check(ps, f, 1e-6, 2, pick);
  INFO("worst group: ", rep.worst);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("fooling term through the classifier matches finite differences") {
  Rng rng(61, 0);
  Classifier<double> cls(1, 0.125, rng);
  Rng data_rng(62, 0);
  auto x = rand_img(2, 1, data_rng);
  std::vector<int> y{3, 0};
  double gamma = 0.005;

  auto ps = cls.params();
  auto f = [&]() {
    zero_grads(ps);
    cls.clear_ctx();
    Rng drop(63, 0);
    auto logits = cls.forward(x, Mode::train, &drop);
    auto t = gamma_term(logits, y, gamma);
    cls.backward(t.dlogits);
    return t.value;
  };
  Rng pick(64, 0);
  auto rep = grad_check(ps, f, 1e-6, 2, pick);
  INFO("worst group: ", rep.worst);
  CHECK(rep.max_rel_err < 1e-5);
}
