#include "advaug/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "advaug/checkpoint.hpp"

namespace advaug {

ComponentMask ablation_mask(char id) {
  ComponentMask m;
  switch (id) {
    case 'a':
      return m;
    case 'b':
      m.stn = m.invariance = true;
      return m;
    case 'c':
      m.stn = m.dc = m.dd = true;
      return m;
    case 'd':
      m.noise_dec = m.dc = true;
      return m;
    case 'e':
      m.unet = m.dc = true;
      return m;
    case 'f':
      m.unet = m.dd = true;
      return m;
    case 'g':
      m.unet = m.dc = m.dd = true;
      return m;
    case 'h':
      m.stn = m.unet = m.dc = m.dd = true;
      return m;
    case 'l':
      m.stn = m.unet = m.dc = m.dd = m.gamma_on = true;
      return m;
  }
  throw ConfigError(std::string("unknown experiment id '") + id + "'");
}

const char* ablation_describe(char id) {
  switch (id) {
    case 'a':
      return "classifier alone";
    case 'b':
      return "affine transformer trained for invariance";
    case 'c':
      return "affine stage, both discriminators";
    case 'd':
      return "noise-driven decoder, class discriminator";
    case 'e':
      return "encoder-decoder, class discriminator";
    case 'f':
      return "encoder-decoder, dissimilarity discriminator";
    case 'g':
      return "encoder-decoder, both discriminators";
    case 'h':
      return "full generator, both discriminators, gamma off";
    case 'l':
      return "full generator, both discriminators, gamma on";
  }
  throw ConfigError(std::string("unknown experiment id '") + id + "'");
}

RunMode parse_run_mode(const std::string& s) {
  if (s == "joint") return RunMode::joint;
  if (s == "separate") return RunMode::separate;
  if (s == "baseline") return RunMode::baseline;
  throw ConfigError("unknown run mode '" + s + "'");
}

const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::joint:
      return "joint";
    case RunMode::separate:
      return "separate";
    case RunMode::baseline:
      return "baseline";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (m < 2) throw ConfigError("batch size must be at least 2");
  if (n_iter < 1) throw ConfigError("n_iter must be positive");
  // zero is allowed so a frozen no-op step can be exercised; negative never is
  if (lr_common < 0 || lr_classifier < 0)
    throw ConfigError("learning rates cannot be negative");
  if (!(width > 0)) throw ConfigError("width multiplier must be positive");
  if (noise_dim < 1) throw ConfigError("noise_dim must be positive");
  if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
  if (!std::isfinite(weights.alpha) || !std::isfinite(weights.beta) ||
      !std::isfinite(weights.gamma) || weights.alpha < 0 || weights.beta < 0 ||
      weights.gamma < 0)
    throw ConfigError("loss weights must be finite and nonnegative");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (eval_max_n < 0) throw ConfigError("eval_max_n cannot be negative");
  if (ckpt_every < 1) throw ConfigError("ckpt_every must be positive");
  for (int e : snapshot_epochs)
    if (e < 1 || e > n_iter)
      throw ConfigError("snapshot epoch " + std::to_string(e) +
                        " outside the run");
  switch (mode) {
    case RunMode::baseline:
      if (mask.has_gen() || mask.dc || mask.dd)
        throw ConfigError("baseline mode trains the classifier alone");
      break;
    case RunMode::separate:
      if (!mask.has_gen())
        throw ConfigError("separate mode needs a generator architecture");
      if (mask.invariance)
        throw ConfigError("separate mode conflicts with invariance training");
      break;
    case RunMode::joint:
      if (!mask.has_gen())
        throw ConfigError(
            "joint mode needs a generator; baseline mode trains a plain "
            "classifier");
      if (mask.invariance && (mask.dc || mask.dd || mask.gamma_on))
        throw ConfigError("invariance training uses the classification loss alone");
      if (!mask.invariance && !mask.dc && !mask.dd && !mask.gamma_on)
        throw ConfigError("a generator is present but nothing trains it");
      break;
  }
}

GenConfig TrainConfig::gen_config(int img_ch) const {
  GenConfig g;
  g.img_ch = img_ch;
  g.noise_dim = noise_dim;
  g.width = width;
  g.use_stn = mask.stn;
  g.use_unet = mask.unet;
  g.noise_decoder = mask.noise_dec;
  g.head_hidden = head_hidden;
  return g;
}

namespace {
const TrainConfig& checked(const TrainConfig& c) {
  c.validate();
  return c;
}
}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const PreparedData& data)
    : cfg_(checked(cfg)),
      data_(data),
      data_rng_(cfg.seeds.data, 0),
      noise_rng_(cfg.seeds.noise, 0),
      drop_rng_(cfg.seeds.dropout, 0),
      sampler_(data.train_x, data.train_y, data_rng_),
      opt_g_(float(cfg.lr_common)),
      opt_dc_(float(cfg.lr_common)),
      opt_dd_(float(cfg.lr_common)),
      opt_c_(float(cfg.lr_classifier)) {
  // fixed build order keeps the init stream stable across ablations
  Rng init(cfg_.seeds.init, 0);
  if (cfg_.mode != RunMode::baseline && cfg_.mask.has_gen()) {
    gen_ = std::make_unique<Generator<float>>(cfg_.gen_config(data_.img_ch), init);
    gen_ps_ = gen_->params();
    gen_bufs_ = gen_->buffers();
  }
  if (cfg_.mode == RunMode::joint && cfg_.mask.dc) {
    dc_ = std::make_unique<ClassDisc<float>>(data_.img_ch, cfg_.width, init);
    dc_ps_ = dc_->params();
  }
  if (cfg_.mode == RunMode::joint && cfg_.mask.dd) {
    dd_ = std::make_unique<DissimDisc<float>>(data_.img_ch, cfg_.width, init);
    dd_ps_ = dd_->params();
  }
  cls_ = std::make_unique<Classifier<float>>(data_.img_ch, cfg_.width, init);
  cls_ps_ = cls_->params();
}

LossReport Trainer::step() {
  BatchTriple t = sampler_.next(cfg_.m);
  last_triple_ = t;
  LossReport rep;
  if (cfg_.mode == RunMode::baseline) {
    rep = step_baseline(t);
  } else {
    const int b = t.bi.x.b;
    Tensor z = cfg_.mask.invariance
                   ? Tensor(b, cfg_.noise_dim, 1, 1)
                   : draw_noise<float>(b, cfg_.noise_dim, noise_rng_);
    last_z_ = z;
    rep = cfg_.mask.invariance ? step_invariance(t, z) : step_adversarial(t, z);
  }
  check_finite(rep);
  trace_.push_back(rep);
  ++step_;
  return rep;
}

LossReport Trainer::step_baseline(const BatchTriple& t) {
  zero_grads(cls_ps_);
  Tensor xa = augment(t.bi.x, cfg_.da, noise_rng_);
  Tensor logits = cls_->forward(xa, Mode::train, &drop_rng_);
  LogitLoss<float> ce = softmax_ce(logits, t.bi.y);
  cls_->backward(ce.dlogits);
  opt_c_.step(cls_ps_);
  notify("c");
  return loss_total(0, 0, 0, ce.value);
}

LossReport Trainer::step_invariance(const BatchTriple& t, const Tensor& z) {
  // the classification loss flows through the classifier into the
  // transformer; both move in the same step
  zero_grads(gen_ps_);
  zero_grads(cls_ps_);
  Tensor xg = gen_->forward(t.bi.x, z, Mode::train, nullptr);
  Tensor logits = cls_->forward(xg, Mode::train, &drop_rng_);
  LogitLoss<float> ce = softmax_ce(logits, t.bi.y);
  Tensor dxg = cls_->backward(ce.dlogits);
  gen_->backward(dxg);
  opt_g_.step(gen_ps_);
  notify("g");
  opt_c_.step(cls_ps_);
  notify("c");
  return loss_total(0, 0, 0, ce.value);
}

LossReport Trainer::step_adversarial(const BatchTriple& t, const Tensor& z) {
  const bool train_g = (cfg_.mode == RunMode::joint);
  // one generator pass feeds every sub-update; train mode keeps the backward
  // context that the generator update consumes later
  Tensor xg =
      gen_->forward(t.bi.x, z, train_g ? Mode::train : Mode::sample, nullptr);

  double l_dc = 0, l_dd = 0, l_g = 0, l_c = 0;
  double g_a = 0, g_b = 0, g_g = 0;

  if (dc_) {
    // xg enters as a value: no gradient reaches the generator from here
    zero_grads(dc_ps_);
    Tensor pr = dc_->forward(t.bj.x, t.bj.y, Mode::train, &drop_rng_);
    Tensor pf = dc_->forward(xg, t.bi.y, Mode::train, &drop_rng_);
    DiscLoss<float> l = loss_dc(pr.v, pf.v);
    l_dc = l.value;
    Tensor dpf = pf;
    dpf.v = std::move(l.d_fake);
    dc_->backward(dpf);  // the fake pass was last in, so it backs out first
    Tensor dpr = pr;
    dpr.v = std::move(l.d_real);
    dc_->backward(dpr);
    opt_dc_.step(dc_ps_);
    notify("dc");
  }

  if (dd_) {
    zero_grads(dd_ps_);
    Tensor pr = dd_->forward(t.bi.x, t.bk.x, Mode::train, &drop_rng_);
    Tensor pf = dd_->forward(t.bi.x, xg, Mode::train, &drop_rng_);
    DiscLoss<float> l = loss_dd(pr.v, pf.v);
    l_dd = l.value;
    Tensor dpf = pf;
    dpf.v = std::move(l.d_fake);
    dd_->backward(dpf);
    Tensor dpr = pr;
    dpr.v = std::move(l.d_real);
    dd_->backward(dpr);
    opt_dd_.step(dd_ps_);
    notify("dd");
  }

  if (train_g) {
    // judge the fake through the just-updated adversaries; their parameter
    // grads pick up scratch here, but every sub-update zeroes its own grads
    // first, so only the image gradient matters
    zero_grads(gen_ps_);
    Tensor dxg(xg.b, xg.c, xg.h, xg.w);
    if (dc_) {
      Tensor p = dc_->forward(xg, t.bi.y, Mode::train, &drop_rng_);
      std::vector<float> dp;
      g_a = detail::neg_log_mean(p.v, double(cfg_.weights.alpha), dp);
      Tensor dpt = p;
      dpt.v = std::move(dp);
      dxg += dc_->backward(dpt);
    }
    if (dd_) {
      Tensor p = dd_->forward(t.bi.x, xg, Mode::train, &drop_rng_);
      std::vector<float> dp;
      g_b = detail::neg_log_mean(p.v, double(cfg_.weights.beta), dp);
      Tensor dpt = p;
      dpt.v = std::move(dp);
      auto [dxa, dxb] = dd_->backward(dpt);
      (void)dxa;
      dxg += dxb;
    }
    if (cfg_.mask.gamma_on && cfg_.weights.gamma > 0) {
      Tensor logits = cls_->forward(xg, Mode::train, &drop_rng_);
      LogitLoss<float> gt = gamma_term(logits, t.bi.y, cfg_.weights.gamma);
      g_g = gt.value;
      dxg += cls_->backward(gt.dlogits);
    }
    gen_->backward(dxg);  // pops the context of the shared forward
    opt_g_.step(gen_ps_);
    notify("g");
    l_g = g_a + g_b + g_g;
  }

  {
    zero_grads(cls_ps_);
    Tensor logits_r = cls_->forward(t.bj.x, Mode::train, &drop_rng_);
    LogitLoss<float> cer = softmax_ce(logits_r, t.bj.y);
    cls_->backward(cer.dlogits);
    // the generator just moved, so the augmented batch comes from a fresh
    // pass; sample mode keeps no context and leaves the running stats alone
    Tensor xa = train_g ? gen_->forward(t.bi.x, z, Mode::sample, nullptr) : xg;
    Tensor logits_a = cls_->forward(xa, Mode::train, &drop_rng_);
    LogitLoss<float> cea = softmax_ce(logits_a, t.bi.y);
    cls_->backward(cea.dlogits);
    opt_c_.step(cls_ps_);
    notify("c");
    l_c = cer.value + cea.value;
  }

  LossReport rep = loss_total(l_g, l_dc, l_dd, l_c);
  rep.g_alpha = g_a;
  rep.g_beta = g_b;
  rep.g_gamma = g_g;
  return rep;
}

void Trainer::check_finite(const LossReport& rep) const {
  if (!std::isfinite(rep.total))
    throw DivergenceError("non-finite loss at step " + std::to_string(step_ + 1));
}

double Trainer::accuracy(const Tensor& x, const std::vector<int>& y, int max_n) {
  int n = x.b;
  if (max_n > 0) n = std::min(n, max_n);
  if (n == 0) return 0.0;
  const bool through_gen = cfg_.mask.invariance && gen_ != nullptr;
  int correct = 0;
  const int chunk = 250;
  for (int off = 0; off < n; off += chunk) {
    int take = std::min(chunk, n - off);
    Tensor xb(take, x.c, x.h, x.w);
    std::memcpy(xb.v.data(), x.v.data() + size_t(off) * size_t(x.dim()),
                sizeof(float) * size_t(xb.numel()));
    if (through_gen) {
      Tensor z0(take, cfg_.noise_dim, 1, 1);
      xb = gen_->forward(xb, z0, Mode::eval, nullptr);
    }
    Tensor logits = cls_->forward(xb, Mode::eval, nullptr);
    const int nc = logits.dim();
    for (int i = 0; i < take; ++i) {
      const float* row = logits.v.data() + size_t(i) * size_t(nc);
      int am = 0;
      for (int k = 1; k < nc; ++k)
        if (row[k] > row[am]) am = k;
      correct += (am == y[size_t(off + i)]);
    }
  }
  return 100.0 * double(correct) / double(n);
}

RunResult Trainer::run() {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  RunResult res;
  res.best_val_acc = -1;
  if (epoch_ >= cfg_.n_iter) {
    // nothing left to train, e.g. resumed from a finished run
    res.epochs = epoch_;
    res.steps = step_;
    res.final_test_acc = accuracy(data_.test_x, data_.test_y, 0);
    res.final_train_acc = accuracy(data_.train_x, data_.train_y, cfg_.eval_max_n);
    res.best_val_acc = 0;
    res.wall_s = wall();
    return res;
  }
  std::ofstream csv;
  const bool to_disk = !cfg_.out_dir.empty();
  if (to_disk) {
    fs::create_directories(cfg_.out_dir);
    const bool resumed = epoch_ > 0;
    csv.open(cfg_.out_dir + "/metrics.csv",
             resumed ? std::ios::app : std::ios::trunc);
    if (!csv) throw FileError("cannot write " + cfg_.out_dir + "/metrics.csv");
    if (!resumed)
      csv << "kind,epoch,step,l_g,l_dc,l_dd,l_c,l_total,acc_train,acc_val,"
             "acc_test,wall_s\n";
  }
  char buf[256];
  for (int e = epoch_ + 1; e <= cfg_.n_iter; ++e) {
    double sg = 0, sdc = 0, sdd = 0, sc = 0, st = 0;
    int k = 0;
    do {
      LossReport rep = step();
      sg += rep.g;
      sdc += rep.dc;
      sdd += rep.dd;
      sc += rep.c;
      st += rep.total;
      ++k;
      if (to_disk) {
        std::snprintf(buf, sizeof buf,
                      "step,%d,%lld,%.6g,%.6g,%.6g,%.6g,%.6g,,,,%.2f\n", e,
                      (long long)step_, rep.g, rep.dc, rep.dd, rep.c, rep.total,
                      wall());
        csv << buf;
      }
    } while (sampler_.remaining() > 0);
    epoch_ = e;
    const bool last = (e == cfg_.n_iter);
    const bool due = last || (e % cfg_.eval_every == 0);
    double atr = -1, ava = -1, ate = -1;
    if (due) {
      atr = accuracy(data_.train_x, data_.train_y, cfg_.eval_max_n);
      if (data_.val_x.b > 0) ava = accuracy(data_.val_x, data_.val_y, 0);
      // the cap holds mid-run evals cheap; the last one is always the full set
      ate = accuracy(data_.test_x, data_.test_y, last ? 0 : cfg_.eval_max_n);
      res.final_test_acc = ate;
      res.final_train_acc = atr;
    }
    if (to_disk) {
      auto acc_col = [](double a) {
        if (a < 0) return std::string();
        char tb[32];
        std::snprintf(tb, sizeof tb, "%.4f", a);
        return std::string(tb);
      };
      std::snprintf(buf, sizeof buf, "epoch,%d,%lld,%.6g,%.6g,%.6g,%.6g,%.6g,",
                    e, (long long)step_, sg / k, sdc / k, sdd / k, sc / k,
                    st / k);
      csv << buf << acc_col(atr) << ',' << acc_col(ava) << ',' << acc_col(ate);
      std::snprintf(buf, sizeof buf, ",%.2f\n", wall());
      csv << buf;
      csv.flush();
    }
    if (ava >= 0 && ava > res.best_val_acc) {
      res.best_val_acc = ava;
      res.best_val_epoch = e;
      if (to_disk) save_checkpoint(cfg_.out_dir + "/best.ckpt");
    }
    if (to_disk && gen_ &&
        std::find(cfg_.snapshot_epochs.begin(), cfg_.snapshot_epochs.end(),
                  e) != cfg_.snapshot_epochs.end())
      save_generator_snapshot(cfg_.out_dir + "/gen_epoch" + std::to_string(e) +
                              ".ckpt");
    if (to_disk && gen_ && last)
      save_generator_snapshot(cfg_.out_dir + "/gen_final.ckpt");
    if (to_disk && (last || e % cfg_.ckpt_every == 0))
      save_checkpoint(cfg_.out_dir + "/last.ckpt");
  }
  res.epochs = epoch_;
  res.steps = step_;
  res.wall_s = wall();
  if (res.best_val_acc < 0) res.best_val_acc = 0;
  return res;
}

void Trainer::save_checkpoint(const std::string& path) {
  Checkpoint ck;
  ck.put_str("format", "advaug-train");
  ck.put_int("version", 1);
  ck.put_int("config.hash", int64_t(cfg_.config_hash));
  ck.put_int("epoch", epoch_);
  ck.put_int("step", step_);
  ck.put_str("rng.data", data_rng_.state());
  ck.put_str("rng.noise", noise_rng_.state());
  ck.put_str("rng.drop", drop_rng_.state());
  ck.put_u32("sampler.order", sampler_.order());
  ck.put_int("sampler.cursor", int64_t(sampler_.cursor()));
  if (gen_) {
    put_params(ck, "p", gen_ps_);
    put_buffers(ck, "b", gen_bufs_);
    put_adam(ck, "adam.g", opt_g_, gen_ps_);
  }
  if (dc_) {
    put_params(ck, "p", dc_ps_);
    put_adam(ck, "adam.dc", opt_dc_, dc_ps_);
  }
  if (dd_) {
    put_params(ck, "p", dd_ps_);
    put_adam(ck, "adam.dd", opt_dd_, dd_ps_);
  }
  put_params(ck, "p", cls_ps_);
  put_adam(ck, "adam.c", opt_c_, cls_ps_);
  ck.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.str("format") != "advaug-train")
    throw StateError(path + " is not a trainer checkpoint");
  if (uint64_t(ck.get_int("config.hash")) != cfg_.config_hash)
    throw StateError(
        "checkpoint was written under a different config (hash mismatch)");
  epoch_ = int(ck.get_int("epoch"));
  step_ = ck.get_int("step");
  data_rng_.restore(ck.str("rng.data"));
  noise_rng_.restore(ck.str("rng.noise"));
  drop_rng_.restore(ck.str("rng.drop"));
  sampler_.restore(ck.u32("sampler.order"), size_t(ck.get_int("sampler.cursor")));
  if (gen_) {
    get_params(ck, "p", gen_ps_);
    get_buffers(ck, "b", gen_bufs_);
    get_adam(ck, "adam.g", opt_g_, gen_ps_);
  }
  if (dc_) {
    get_params(ck, "p", dc_ps_);
    get_adam(ck, "adam.dc", opt_dc_, dc_ps_);
  }
  if (dd_) {
    get_params(ck, "p", dd_ps_);
    get_adam(ck, "adam.dd", opt_dd_, dd_ps_);
  }
  get_params(ck, "p", cls_ps_);
  get_adam(ck, "adam.c", opt_c_, cls_ps_);
}

void Trainer::save_generator_snapshot(const std::string& path) {
  require(gen_ != nullptr, "no generator in this run");
  const GenConfig& g = gen_->cfg;
  Checkpoint ck;
  ck.put_str("format", "advaug-gen");
  ck.put_int("version", 1);
  ck.put_int("img_ch", g.img_ch);
  ck.put_int("noise_dim", g.noise_dim);
  ck.put_num("width", g.width);
  ck.put_int("use_stn", g.use_stn);
  ck.put_int("use_unet", g.use_unet);
  ck.put_int("noise_decoder", g.noise_decoder);
  ck.put_int("unshare_encoder", g.unshare_encoder);
  ck.put_int("head_hidden", g.head_hidden);
  put_params(ck, "p", gen_ps_);
  put_buffers(ck, "b", gen_bufs_);
  ck.save(path);
}

void Trainer::load_generator_snapshot(const std::string& path) {
  require(gen_ != nullptr, "no generator in this run");
  Checkpoint ck = Checkpoint::load(path);
  if (ck.str("format") != "advaug-gen")
    throw StateError(path + " is not a generator snapshot");
  const GenConfig& g = gen_->cfg;
  auto want = [&](const char* key, int64_t have) {
    if (ck.get_int(key) != have)
      throw ConfigError(std::string("snapshot ") + key +
                        " does not match this run");
  };
  want("img_ch", g.img_ch);
  want("noise_dim", g.noise_dim);
  want("use_stn", g.use_stn);
  want("use_unet", g.use_unet);
  want("noise_decoder", g.noise_decoder);
  want("unshare_encoder", g.unshare_encoder);
  want("head_hidden", g.head_hidden);
  if (ck.get_num("width") != g.width)
    throw ConfigError("snapshot width does not match this run");
  get_params(ck, "p", gen_ps_);
  get_buffers(ck, "b", gen_bufs_);
}

std::vector<ParamRef<float>>& Trainer::params_of(const std::string& net) {
  if (net == "gen" && gen_) return gen_ps_;
  if (net == "dc" && dc_) return dc_ps_;
  if (net == "dd" && dd_) return dd_ps_;
  if (net == "cls") return cls_ps_;
  throw StateError("no net named '" + net + "' in this run");
}

}  // namespace advaug
