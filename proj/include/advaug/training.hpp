#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advaug/augment.hpp"
#include "advaug/datasets.hpp"
#include "advaug/losses.hpp"
#include "advaug/models.hpp"
#include "advaug/nn.hpp"

namespace advaug {

// which pieces of the pipeline exist and which losses train the generator
struct ComponentMask {
  bool stn = false;         // stage 1: affine resampling
  bool unet = false;        // stage 2: encoder-decoder residual
  bool noise_dec = false;   // decoder driven by the noise vector alone
  bool dc = false;          // class-conditional discriminator
  bool dd = false;          // dissimilarity discriminator
  bool gamma_on = false;    // classifier-fooling term in the generator loss
  bool invariance = false;  // no adversaries: the classification loss trains
                            // the transformer jointly with the classifier
  bool has_gen() const { return stn || unet || noise_dec; }
};

// single-letter experiment ids, 'a' (classifier alone) through 'l' (full)
ComponentMask ablation_mask(char id);
const char* ablation_describe(char id);

enum class RunMode { joint, separate, baseline };
RunMode parse_run_mode(const std::string& s);
const char* run_mode_name(RunMode m);

// independent streams; changing one must not move the others
struct TrainSeeds {
  uint64_t init = 1, data = 2, noise = 3, dropout = 4;
};

struct TrainConfig {
  int m = 64;
  int n_iter = 200;         // epochs over the training subset
  double lr_common = 5e-4;  // generator and both discriminators
  double lr_classifier = 1e-3;
  LossWeights<float> weights;
  double width = 0.25;
  int noise_dim = 100;
  int head_hidden = 128;
  TrainSeeds seeds;
  RunMode mode = RunMode::joint;
  ComponentMask mask;
  AugmentPolicy da;  // baseline mode only
  std::vector<int> snapshot_epochs;  // generator-only dumps after these epochs
  int eval_every = 25;    // epochs between accuracy evals (final always runs)
  int eval_max_n = 2000;  // test/train cap for mid-run evals, 0 = full
  int ckpt_every = 10;    // epochs between last.ckpt rewrites
  std::string out_dir;    // empty = no files, keep everything in memory
  uint64_t config_hash = 0;  // stamped into checkpoints, checked on resume

  void validate() const;
  GenConfig gen_config(int img_ch) const;
};

struct RunResult {
  int epochs = 0;
  int64_t steps = 0;
  double final_test_acc = 0;
  double final_train_acc = 0;
  double best_val_acc = 0;
  int best_val_epoch = 0;
  double wall_s = 0;
};

// One experiment: nets, optimizers, rng streams, batch sampler. Holds a
// reference to the prepared data; the data must outlive the trainer.
class Trainer {
 public:
  using Hook = std::function<void(const std::string&)>;

  Trainer(const TrainConfig& cfg, const PreparedData& data);

  // one iteration of the alternating update (dc, dd, g, c); throws
  // DivergenceError on non-finite losses
  LossReport step();

  // epochs epoch()+1 .. n_iter with periodic evals and checkpoints
  RunResult run();

  // top-1 accuracy in percent; max_n > 0 caps the evaluated prefix
  double accuracy(const Tensor& x, const std::vector<int>& y, int max_n = 0);

  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);
  void save_generator_snapshot(const std::string& path);
  void load_generator_snapshot(const std::string& path);

  // called after each optimizer step with "dc", "dd", "g" or "c"
  void set_sub_update_hook(Hook h) { on_sub_update_ = std::move(h); }

  const TrainConfig& config() const { return cfg_; }
  int epoch() const { return epoch_; }
  int64_t global_step() const { return step_; }
  const std::vector<LossReport>& trace() const { return trace_; }
  const BatchTriple& last_triple() const { return last_triple_; }
  const Tensor& last_noise() const { return last_z_; }

  Generator<float>* generator() { return gen_.get(); }
  Classifier<float>& classifier() { return *cls_; }
  std::vector<ParamRef<float>>& params_of(const std::string& net);

 private:
  void notify(const char* stage) {
    if (on_sub_update_) on_sub_update_(stage);
  }
  LossReport step_baseline(const BatchTriple& t);
  LossReport step_invariance(const BatchTriple& t, const Tensor& z);
  LossReport step_adversarial(const BatchTriple& t, const Tensor& z);
  void check_finite(const LossReport& rep) const;

  TrainConfig cfg_;
  const PreparedData& data_;
  Rng data_rng_, noise_rng_, drop_rng_;
  TripleSampler sampler_;

  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<ClassDisc<float>> dc_;
  std::unique_ptr<DissimDisc<float>> dd_;
  std::unique_ptr<Classifier<float>> cls_;
  std::vector<ParamRef<float>> gen_ps_, dc_ps_, dd_ps_, cls_ps_;
  std::vector<BufRef<float>> gen_bufs_;
  Adam<float> opt_g_, opt_dc_, opt_dd_, opt_c_;

  int epoch_ = 0;
  int64_t step_ = 0;
  std::vector<LossReport> trace_;
  BatchTriple last_triple_;
  Tensor last_z_;
  Hook on_sub_update_;
};

}  // namespace advaug
