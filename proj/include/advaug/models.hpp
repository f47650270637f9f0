#pragma once
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "advaug/errors.hpp"
#include "advaug/nn.hpp"
#include "advaug/rng.hpp"
#include "advaug/stn.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

// width-scaled channel count; every table width is multiplied by wm
inline int ch(int base, double wm) {
  return std::max(1, int(std::lround(base * wm)));
}

template <class T>
TensorT<T> one_hot(const std::vector<int>& y, int n_class = 10) {
  TensorT<T> out = TensorT<T>::vec(int(y.size()), n_class);
  out.zero();
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_class)
      throw DataError("label " + std::to_string(y[i]) + " outside [0, " +
                      std::to_string(n_class) + ")");
    out.v[i * size_t(n_class) + size_t(y[i])] = T(1);
  }
  return out;
}

template <class T>
size_t param_count(const std::vector<ParamRef<T>>& ps) {
  size_t n = 0;
  for (auto& p : ps) n += p.val->size();
  return n;
}

template <class T>
std::string param_table(const std::vector<ParamRef<T>>& ps) {
  std::string s;
  for (auto& p : ps) s += p.name + "  " + std::to_string(p.val->size()) + "\n";
  s += "total  " + std::to_string(param_count(ps)) + "\n";
  return s;
}

// conv 3x3 + batchnorm + leaky relu, the generator's only block type
template <class T>
struct ConvBN {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  LReLU<T> act;

  ConvBN(const std::string& n, int ic, int oc, Rng& rng)
      : conv(n, ic, oc, 3, false, rng, /*with_bias=*/false),
        bn(n + ".bn", oc),
        act(n + ".act") {}

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng* rng) {
    return act.forward(bn.forward(conv.forward(x, m, rng), m, rng), m, rng);
  }
  TensorT<T> backward(const TensorT<T>& dy) {
    return conv.backward(bn.backward(act.backward(dy)));
  }
  void collect(std::vector<ParamRef<T>>& out) {
    conv.collect(out);
    bn.collect(out);
  }
  void collect_buffers(std::vector<BufRef<T>>& out) { bn.collect_buffers(out); }
  void clear_ctx() {
    conv.clear_ctx();
    bn.clear_ctx();
    act.clear_ctx();
  }
};

template <class T>
struct UnetSkips {
  TensorT<T> s0, s1, s2, s3;  // concat@32, 128@16, 256@8, 512@4 activations
};

// down branch: two image convs, noise-map concat, then four pool+conv stages
// to a 2x2 bottleneck; channel plan 32,32 | 64,128 | 256,256 | 512,512 |
// 1024,1024, all scaled by the width multiplier
template <class T>
struct UEncoder {
  int c32;
  ConvBN<T> img1, img2, e64, e128, e256a, e256b, e512a, e512b, e1024a, e1024b;
  MaxPool2x2<T> pool0, pool1, pool2, pool3;

  UEncoder(const std::string& n, int img_ch, double wm, Rng& rng)
      : c32(ch(32, wm)),
        img1(n + ".img1", img_ch, ch(32, wm), rng),
        img2(n + ".img2", ch(32, wm), ch(32, wm), rng),
        e64(n + ".c64", 2 * ch(32, wm), ch(64, wm), rng),
        e128(n + ".c128", ch(64, wm), ch(128, wm), rng),
        e256a(n + ".c256a", ch(128, wm), ch(256, wm), rng),
        e256b(n + ".c256b", ch(256, wm), ch(256, wm), rng),
        e512a(n + ".c512a", ch(256, wm), ch(512, wm), rng),
        e512b(n + ".c512b", ch(512, wm), ch(512, wm), rng),
        e1024a(n + ".c1024a", ch(512, wm), ch(1024, wm), rng),
        e1024b(n + ".c1024b", ch(1024, wm), ch(1024, wm), rng),
        pool0(n + ".pool0"), pool1(n + ".pool1"),
        pool2(n + ".pool2"), pool3(n + ".pool3") {}

  TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& zmaps, Mode m, Rng* rng,
                     UnetSkips<T>* sk) {
    TensorT<T> a = img2.forward(img1.forward(x, m, rng), m, rng);
    TensorT<T> t = concat_c(a, zmaps);
    if (sk) sk->s0 = t;
    t = pool0.forward(t, m, rng);
    t = e128.forward(e64.forward(t, m, rng), m, rng);
    if (sk) sk->s1 = t;
    t = pool1.forward(t, m, rng);
    t = e256b.forward(e256a.forward(t, m, rng), m, rng);
    if (sk) sk->s2 = t;
    t = pool2.forward(t, m, rng);
    t = e512b.forward(e512a.forward(t, m, rng), m, rng);
    if (sk) sk->s3 = t;
    t = pool3.forward(t, m, rng);
    return e1024b.forward(e1024a.forward(t, m, rng), m, rng);
  }

  // db: gradient at the bottleneck; dsk: gradients flowing into the skip taps
  // (null when the forward kept no skips); returns (d_image, d_zmaps)
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& db,
                                             const UnetSkips<T>* dsk) {
    TensorT<T> d = e1024a.backward(e1024b.backward(db));
    d = pool3.backward(d);
    if (dsk) d += dsk->s3;
    d = e512a.backward(e512b.backward(d));
    d = pool2.backward(d);
    if (dsk) d += dsk->s2;
    d = e256a.backward(e256b.backward(d));
    d = pool1.backward(d);
    if (dsk) d += dsk->s1;
    d = e64.backward(e128.backward(d));
    d = pool0.backward(d);
    if (dsk) d += dsk->s0;
    TensorT<T> da(d.b, c32, d.h, d.w), dz(d.b, d.c - c32, d.h, d.w);
    split_c(d, da, dz);
    return {img1.backward(img2.backward(da)), std::move(dz)};
  }

  void collect(std::vector<ParamRef<T>>& out) {
    for (auto* b : blocks()) b->collect(out);
  }
  void collect_buffers(std::vector<BufRef<T>>& out) {
    for (auto* b : blocks()) b->collect_buffers(out);
  }
  void clear_ctx() {
    for (auto* b : blocks()) b->clear_ctx();
    pool0.clear_ctx();
    pool1.clear_ctx();
    pool2.clear_ctx();
    pool3.clear_ctx();
  }
  void freeze_running(bool f) {
    for (auto* b : blocks()) b->bn.freeze_running = f;
  }

 private:
  std::vector<ConvBN<T>*> blocks() {
    return {&img1, &img2, &e64, &e128, &e256a, &e256b,
            &e512a, &e512b, &e1024a, &e1024b};
  }
};

// up branch: four upsample+conv-pair stages from the 2x2 bottleneck back to
// 32x32, with optional skip concatenation, then a zero-initialized 1x1 head
template <class T>
struct UDecoder {
  bool with_skips;
  int c32, c128, c256, c512, c1024;
  UpsampleNN2x<T> up3, up2, up1, up0;
  ConvBN<T> d512a, d512b, d256a, d256b, d128a, d128b, d64a, d64b;
  Conv2d<T> head;

  UDecoder(const std::string& n, int img_ch, double wm, bool skips, Rng& rng)
      : with_skips(skips),
        c32(ch(32, wm)), c128(ch(128, wm)), c256(ch(256, wm)),
        c512(ch(512, wm)), c1024(ch(1024, wm)),
        up3(n + ".up3"), up2(n + ".up2"), up1(n + ".up1"), up0(n + ".up0"),
        d512a(n + ".c512a", ch(1024, wm) + (skips ? ch(512, wm) : 0), ch(512, wm), rng),
        d512b(n + ".c512b", ch(512, wm), ch(512, wm), rng),
        d256a(n + ".c256a", ch(512, wm) + (skips ? ch(256, wm) : 0), ch(256, wm), rng),
        d256b(n + ".c256b", ch(256, wm), ch(256, wm), rng),
        d128a(n + ".c128a", ch(256, wm) + (skips ? ch(128, wm) : 0), ch(128, wm), rng),
        d128b(n + ".c128b", ch(128, wm), ch(128, wm), rng),
        d64a(n + ".c64a", ch(128, wm) + (skips ? 2 * ch(32, wm) : 0), ch(64, wm), rng),
        d64b(n + ".c64b", ch(64, wm), ch(64, wm), rng),
        head(n + ".head", ch(64, wm), img_ch, 1, false, rng) {
    head.kp.zero_init();
  }

  TensorT<T> forward(const TensorT<T>& b, const UnetSkips<T>* sk, Mode m, Rng* rng) {
    require(bool(sk) == with_skips, "decoder skip expectation mismatch");
    TensorT<T> t = up3.forward(b, m, rng);
    if (sk) t = concat_c(t, sk->s3);
    t = d512b.forward(d512a.forward(t, m, rng), m, rng);
    t = up2.forward(t, m, rng);
    if (sk) t = concat_c(t, sk->s2);
    t = d256b.forward(d256a.forward(t, m, rng), m, rng);
    t = up1.forward(t, m, rng);
    if (sk) t = concat_c(t, sk->s1);
    t = d128b.forward(d128a.forward(t, m, rng), m, rng);
    t = up0.forward(t, m, rng);
    if (sk) t = concat_c(t, sk->s0);
    t = d64b.forward(d64a.forward(t, m, rng), m, rng);
    return head.forward(t, m, rng);
  }

  std::pair<TensorT<T>, UnetSkips<T>> backward(const TensorT<T>& dres) {
    UnetSkips<T> dsk;
    TensorT<T> d = d64a.backward(d64b.backward(head.backward(dres)));
    if (with_skips) pop_skip(d, c128, 2 * c32, dsk.s0);
    d = up0.backward(d);
    d = d128a.backward(d128b.backward(d));
    if (with_skips) pop_skip(d, c256, c128, dsk.s1);
    d = up1.backward(d);
    d = d256a.backward(d256b.backward(d));
    if (with_skips) pop_skip(d, c512, c256, dsk.s2);
    d = up2.backward(d);
    d = d512a.backward(d512b.backward(d));
    if (with_skips) pop_skip(d, c1024, c512, dsk.s3);
    d = up3.backward(d);
    return {std::move(d), std::move(dsk)};
  }

  void collect(std::vector<ParamRef<T>>& out) {
    for (auto* b : blocks()) b->collect(out);
    head.collect(out);
  }
  void collect_buffers(std::vector<BufRef<T>>& out) {
    for (auto* b : blocks()) b->collect_buffers(out);
  }
  void clear_ctx() {
    for (auto* b : blocks()) b->clear_ctx();
    head.clear_ctx();
    up3.clear_ctx();
    up2.clear_ctx();
    up1.clear_ctx();
    up0.clear_ctx();
  }
  void freeze_running(bool f) {
    for (auto* b : blocks()) b->bn.freeze_running = f;
  }

 private:
  // splits d into (upsampled part -> d, skip part -> dskip)
  void pop_skip(TensorT<T>& d, int up_c, int skip_c, TensorT<T>& dskip) {
    TensorT<T> du(d.b, up_c, d.h, d.w);
    dskip = TensorT<T>(d.b, skip_c, d.h, d.w);
    split_c(d, du, dskip);
    d = std::move(du);
  }
  std::vector<ConvBN<T>*> blocks() {
    return {&d512a, &d512b, &d256a, &d256b, &d128a, &d128b, &d64a, &d64b};
  }
};

// which pieces of the two-stage generator exist; the full model keeps both
// stages, ablations drop one or replace the whole thing with a noise decoder
struct GenConfig {
  int img_ch = 1;
  int noise_dim = 100;
  double width = 1.0;
  bool use_stn = true;        // stage 1: affine head + resampling
  bool use_unet = true;       // stage 2: encoder-decoder residual
  bool noise_decoder = false; // decoder driven by the noise vector alone
  bool unshare_encoder = false;
  int head_hidden = 128;      // affine-head width, not scaled by width
};

// Two-stage transformation generator. Stage 1 encodes (image, noise maps) to
// a bottleneck vector and emits an affine residual on the identity; the image
// is resampled by it. Stage 2 runs the same encoder (shared weights) plus the
// skip decoder on (resampled image, same noise maps) and adds the decoded
// residual. Either stage can be disabled; a noise-only decoder replaces both.
template <class T>
class Generator {
 public:
  GenConfig cfg;

  explicit Generator(const GenConfig& c, Rng& rng, const std::string& pfx = "gen")
      : cfg(c) {
    require(!(c.noise_decoder && (c.use_stn || c.use_unet)),
            "noise decoder excludes the two-stage path");
    require(c.noise_decoder || c.use_stn || c.use_unet,
            "generator needs at least one stage");
    int c32 = ch(32, c.width), c1024 = ch(1024, c.width);
    if (c.use_stn || c.use_unet) {
      noise_proj = std::make_unique<VecToMaps<T>>(pfx + ".noise", c.noise_dim, c32,
                                                  32, 32, rng);
      noise_act = std::make_unique<LReLU<T>>(pfx + ".noise.act");
      enc = std::make_unique<UEncoder<T>>(pfx + ".enc", c.img_ch, c.width, rng);
    }
    if (c.use_unet && c.unshare_encoder)
      enc2 = std::make_unique<UEncoder<T>>(pfx + ".enc2", c.img_ch, c.width, rng);
    if (c.use_stn) {
      head_flat = std::make_unique<Flatten<T>>(pfx + ".head.flat");
      head_fc1 = std::make_unique<Dense<T>>(pfx + ".head.fc1", c1024 * 2 * 2,
                                            c.head_hidden, false, rng);
      head_act = std::make_unique<LReLU<T>>(pfx + ".head.act");
      head_fc2 =
          std::make_unique<Dense<T>>(pfx + ".head.fc2", c.head_hidden, 6, false, rng);
      head_fc2->kp.zero_init();
    }
    if (c.noise_decoder) {
      nd_fc = std::make_unique<Dense<T>>(pfx + ".nd.fc", c.noise_dim, c1024 * 2 * 2,
                                         false, rng);
      nd_act = std::make_unique<LReLU<T>>(pfx + ".nd.act");
    }
    if (c.use_unet || c.noise_decoder)
      dec = std::make_unique<UDecoder<T>>(pfx + ".dec", c.img_ch, c.width,
                                          /*skips=*/c.use_unet, rng);
  }

  // returns the transformed batch; theta from the last forward is kept for
  // inspection (identity rows when stage 1 is off)
  TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& z, Mode m, Rng* rng) {
    require(x.h == 32 && x.w == 32 && x.c == cfg.img_ch,
            "generator expects (B," + std::to_string(cfg.img_ch) + ",32,32)");
    require(z.b == x.b && z.dim() == cfg.noise_dim, "noise shape mismatch");
    TensorT<T> out;
    theta_ = identity_theta<T>(x.b);
    if (cfg.noise_decoder) {
      TensorT<T> nb = nd_act->forward(nd_fc->forward(z, m, rng), m, rng);
      nb.c = ch(1024, cfg.width);
      nb.h = nb.w = 2;
      out = dec->forward(nb, nullptr, m, rng);
    } else {
      TensorT<T> zmaps = noise_act->forward(noise_proj->forward(z, m, rng), m, rng);
      TensorT<T> xt = x;
      if (cfg.use_stn) {
        TensorT<T> b1 = enc->forward(x, zmaps, m, rng, nullptr);
        TensorT<T> h = head_act->forward(
            head_fc1->forward(head_flat->forward(b1, m, rng), m, rng), m, rng);
        TensorT<T> res = head_fc2->forward(h, m, rng);
        theta_ += res;
        xt = stn_forward(x, theta_);
        if (records_ctx(m)) stn_ctx_.push_back({x, theta_});
      }
      if (cfg.use_unet) {
        UnetSkips<T> sk;
        TensorT<T> b2 = pass2_enc().forward(xt, zmaps, m, rng, &sk);
        TensorT<T> res = dec->forward(b2, &sk, m, rng);
        out = xt;
        out += res;
      } else {
        out = std::move(xt);
      }
    }
    if (!out.all_finite())
      throw DivergenceError("generator produced non-finite activations");
    return out;
  }

  const TensorT<T>& last_theta() const { return theta_; }

  // gradients w.r.t. (image, noise); pass-2 layers unwind before pass 1 so
  // the shared encoder pops its contexts in the right order
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& dout) {
    TensorT<T> dx, dz, dzmaps;
    if (cfg.noise_decoder) {
      auto [dnb, unused] = dec->backward(dout);
      (void)unused;
      dnb.c = dnb.c * dnb.h * dnb.w;
      dnb.h = dnb.w = 1;
      dz = nd_fc->backward(nd_act->backward(dnb));
      return {std::move(dx), std::move(dz)};
    }
    TensorT<T> dxt;
    if (cfg.use_unet) {
      auto [db2, dsk] = dec->backward(dout);
      auto [dxt2, dzm] = pass2_enc().backward(db2, &dsk);
      dxt = std::move(dxt2);
      dxt += dout;  // residual base
      dzmaps = std::move(dzm);
    } else {
      dxt = dout;
    }
    if (cfg.use_stn) {
      if (stn_ctx_.empty())
        throw StateError("generator: backward without a training forward");
      StnCtx sc = std::move(stn_ctx_.back());
      stn_ctx_.pop_back();
      TensorT<T> dx_resample, dtheta;
      stn_backward(sc.x, sc.theta, dxt, dx_resample, dtheta);
      TensorT<T> dh = head_fc2->backward(dtheta);
      TensorT<T> db1 =
          head_flat->backward(head_fc1->backward(head_act->backward(dh)));
      auto [dx_enc, dzm1] = enc->backward(db1, nullptr);
      dx = std::move(dx_resample);
      dx += dx_enc;
      if (dzmaps.numel() == 0)
        dzmaps = std::move(dzm1);
      else
        dzmaps += dzm1;
    } else {
      dx = std::move(dxt);
    }
    dz = noise_proj->backward(noise_act->backward(dzmaps));
    return {std::move(dx), std::move(dz)};
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> ps;
    if (noise_proj) noise_proj->collect(ps);
    if (enc) enc->collect(ps);
    if (enc2) enc2->collect(ps);
    if (head_fc1) head_fc1->collect(ps);
    if (head_fc2) head_fc2->collect(ps);
    if (nd_fc) nd_fc->collect(ps);
    if (dec) dec->collect(ps);
    return ps;
  }
  std::vector<BufRef<T>> buffers() {
    std::vector<BufRef<T>> bs;
    if (enc) enc->collect_buffers(bs);
    if (enc2) enc2->collect_buffers(bs);
    if (dec) dec->collect_buffers(bs);
    return bs;
  }
  void clear_ctx() {
    if (noise_proj) noise_proj->clear_ctx();
    if (noise_act) noise_act->clear_ctx();
    if (enc) enc->clear_ctx();
    if (enc2) enc2->clear_ctx();
    if (head_flat) head_flat->clear_ctx();
    if (head_fc1) head_fc1->clear_ctx();
    if (head_act) head_act->clear_ctx();
    if (head_fc2) head_fc2->clear_ctx();
    if (nd_fc) nd_fc->clear_ctx();
    if (nd_act) nd_act->clear_ctx();
    if (dec) dec->clear_ctx();
    stn_ctx_.clear();
  }
  void freeze_running(bool f) {
    if (enc) enc->freeze_running(f);
    if (enc2) enc2->freeze_running(f);
    if (dec) dec->freeze_running(f);
  }

  std::unique_ptr<VecToMaps<T>> noise_proj;
  std::unique_ptr<LReLU<T>> noise_act;
  std::unique_ptr<UEncoder<T>> enc, enc2;
  std::unique_ptr<Flatten<T>> head_flat;
  std::unique_ptr<Dense<T>> head_fc1;
  std::unique_ptr<LReLU<T>> head_act;
  std::unique_ptr<Dense<T>> head_fc2;
  std::unique_ptr<Dense<T>> nd_fc;
  std::unique_ptr<LReLU<T>> nd_act;
  std::unique_ptr<UDecoder<T>> dec;

 private:
  struct StnCtx {
    TensorT<T> x, theta;
  };
  UEncoder<T>& pass2_enc() { return cfg.unshare_encoder ? *enc2 : *enc; }

  TensorT<T> theta_;
  std::vector<StnCtx> stn_ctx_;
};

// shared trunk of both discriminators: 96,96 | drop | 192,192,192 | drop |
// 192, 1x1 192, 1x1 192 | dense 1 | sigmoid; all convs weight-normalized
template <class T>
void build_disc_trunk(Net<T>& net, const std::string& pfx, int in_ch, double wm,
                      Rng& rng, Dense<T>** head_out) {
  int c96 = ch(96, wm), c192 = ch(192, wm);
  net.template add<Conv2d<T>>(pfx + ".t96a", in_ch, c96, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t96a.act");
  net.template add<Conv2d<T>>(pfx + ".t96b", c96, c96, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t96b.act");
  net.template add<Dropout<T>>(pfx + ".drop1");
  net.template add<Conv2d<T>>(pfx + ".t192a", c96, c192, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t192a.act");
  net.template add<Conv2d<T>>(pfx + ".t192b", c192, c192, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t192b.act");
  net.template add<Conv2d<T>>(pfx + ".t192c", c192, c192, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t192c.act");
  net.template add<Dropout<T>>(pfx + ".drop2");
  net.template add<Conv2d<T>>(pfx + ".t192d", c192, c192, 3, true, rng);
  net.template add<LReLU<T>>(pfx + ".t192d.act");
  net.template add<Conv2d<T>>(pfx + ".p1a", c192, c192, 1, true, rng);
  net.template add<LReLU<T>>(pfx + ".p1a.act");
  net.template add<Conv2d<T>>(pfx + ".p1b", c192, c192, 1, true, rng);
  net.template add<LReLU<T>>(pfx + ".p1b.act");
  net.template add<Flatten<T>>(pfx + ".flat");
  *head_out =
      net.template add<Dense<T>>(pfx + ".out", c192 * 32 * 32, 1, false, rng);
  net.template add<Sigmoid<T>>(pfx + ".sig");
}

// image + one-hot label in, probability of "real pair" out
template <class T>
class ClassDisc {
 public:
  int c48;
  Conv2d<T> img_conv;
  LReLU<T> img_act;
  VecToMaps<T> lab_proj;
  LReLU<T> lab_act;
  Net<T> trunk;
  Dense<T>* head = nullptr;

  ClassDisc(int img_ch, double wm, Rng& rng, const std::string& pfx = "dc")
      : c48(ch(48, wm)),
        img_conv(pfx + ".img", img_ch, ch(48, wm), 3, false, rng),
        img_act(pfx + ".img.act"),
        lab_proj(pfx + ".lab", 10, ch(48, wm), 32, 32, rng),
        lab_act(pfx + ".lab.act") {
    build_disc_trunk(trunk, pfx, 2 * c48, wm, rng, &head);
  }

  TensorT<T> forward(const TensorT<T>& x, const std::vector<int>& y, Mode m,
                     Rng* rng) {
    require(int(y.size()) == x.b, "one label per image");
    TensorT<T> yoh = one_hot<T>(y);
    TensorT<T> a = img_act.forward(img_conv.forward(x, m, rng), m, rng);
    TensorT<T> b = lab_act.forward(lab_proj.forward(yoh, m, rng), m, rng);
    return trunk.forward(concat_c(a, b), m, rng);
  }

  // gradient w.r.t. the image input; label-branch parameter grads accumulate,
  // the one-hot itself is a constant
  TensorT<T> backward(const TensorT<T>& dp) {
    TensorT<T> dcat = trunk.backward(dp);
    TensorT<T> da(dcat.b, c48, dcat.h, dcat.w), db(dcat.b, c48, dcat.h, dcat.w);
    split_c(dcat, da, db);
    lab_proj.backward(lab_act.backward(db));
    return img_conv.backward(img_act.backward(da));
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> ps;
    img_conv.collect(ps);
    lab_proj.collect(ps);
    trunk.collect(ps);
    return ps;
  }
  std::vector<BufRef<T>> buffers() { return {}; }
  void clear_ctx() {
    img_conv.clear_ctx();
    img_act.clear_ctx();
    lab_proj.clear_ctx();
    lab_act.clear_ctx();
    trunk.clear_ctx();
  }
};

// pair of images in, probability of "naturally different pair" out; argument
// order is (original, other)
template <class T>
class DissimDisc {
 public:
  int c48;
  Conv2d<T> conv_a, conv_b;
  LReLU<T> act_a, act_b;
  Net<T> trunk;
  Dense<T>* head = nullptr;

  DissimDisc(int img_ch, double wm, Rng& rng, const std::string& pfx = "dd")
      : c48(ch(48, wm)),
        conv_a(pfx + ".imga", img_ch, ch(48, wm), 3, false, rng),
        conv_b(pfx + ".imgb", img_ch, ch(48, wm), 3, false, rng),
        act_a(pfx + ".imga.act"),
        act_b(pfx + ".imgb.act") {
    build_disc_trunk(trunk, pfx, 2 * c48, wm, rng, &head);
  }

  TensorT<T> forward(const TensorT<T>& xa, const TensorT<T>& xb, Mode m, Rng* rng) {
    require(xa.b == xb.b, "pair batches must match");
    TensorT<T> a = act_a.forward(conv_a.forward(xa, m, rng), m, rng);
    TensorT<T> b = act_b.forward(conv_b.forward(xb, m, rng), m, rng);
    return trunk.forward(concat_c(a, b), m, rng);
  }

  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& dp) {
    TensorT<T> dcat = trunk.backward(dp);
    TensorT<T> da(dcat.b, c48, dcat.h, dcat.w), db(dcat.b, c48, dcat.h, dcat.w);
    split_c(dcat, da, db);
    return {conv_a.backward(act_a.backward(da)),
            conv_b.backward(act_b.backward(db))};
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> ps;
    conv_a.collect(ps);
    conv_b.collect(ps);
    trunk.collect(ps);
    return ps;
  }
  std::vector<BufRef<T>> buffers() { return {}; }
  void clear_ctx() {
    conv_a.clear_ctx();
    conv_b.clear_ctx();
    act_a.clear_ctx();
    act_b.clear_ctx();
    trunk.clear_ctx();
  }
};

// 96,96,96 | drop | 192,192,192 | drop | 192,192,192 | dense 10; produces
// logits, softmax lives with the losses
template <class T>
class Classifier {
 public:
  Net<T> net;
  Dense<T>* head = nullptr;

  Classifier(int img_ch, double wm, Rng& rng, const std::string& pfx = "cls") {
    int c96 = ch(96, wm), c192 = ch(192, wm);
    auto conv = [&](const std::string& n, int ic, int oc, int k) {
      net.template add<Conv2d<T>>(n, ic, oc, k, true, rng);
      net.template add<LReLU<T>>(n + ".act");
    };
    conv(pfx + ".c96a", img_ch, c96, 3);
    conv(pfx + ".c96b", c96, c96, 3);
    conv(pfx + ".c96c", c96, c96, 3);
    net.template add<Dropout<T>>(pfx + ".drop1");
    conv(pfx + ".c192a", c96, c192, 3);
    conv(pfx + ".c192b", c192, c192, 3);
    conv(pfx + ".c192c", c192, c192, 3);
    net.template add<Dropout<T>>(pfx + ".drop2");
    conv(pfx + ".c192d", c192, c192, 3);
    conv(pfx + ".c192e", c192, c192, 3);
    conv(pfx + ".c192f", c192, c192, 3);
    net.template add<Flatten<T>>(pfx + ".flat");
    head = net.template add<Dense<T>>(pfx + ".out", c192 * 32 * 32, 10, false, rng);
  }

  TensorT<T> forward(const TensorT<T>& x, Mode m, Rng* rng) {
    return net.forward(x, m, rng);
  }
  TensorT<T> backward(const TensorT<T>& dlogits) { return net.backward(dlogits); }

  // row-stable softmax; pure, keeps no context
  static TensorT<T> softmax(const TensorT<T>& logits) {
    TensorT<T> p = logits;
    int n = logits.dim();
    for (int b = 0; b < p.b; ++b) {
      T* row = p.sample(b);
      T mx = row[0];
      for (int k = 1; k < n; ++k) mx = std::max(mx, row[k]);
      double s = 0;
      for (int k = 0; k < n; ++k) {
        row[k] = T(std::exp(double(row[k] - mx)));
        s += double(row[k]);
      }
      for (int k = 0; k < n; ++k) row[k] = T(double(row[k]) / s);
    }
    return p;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> ps;
    net.collect(ps);
    return ps;
  }
  std::vector<BufRef<T>> buffers() { return {}; }
  void clear_ctx() { net.clear_ctx(); }
};

// standard-normal noise batch, one fresh draw per training step
template <class T>
TensorT<T> draw_noise(int b, int dim, Rng& rng) {
  TensorT<T> z = TensorT<T>::vec(b, dim);
  for (auto& x : z.v) x = T(rng.normal());
  return z;
}

}  // namespace advaug
