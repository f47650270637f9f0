#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "advaug/config.hpp"
#include "advaug/training.hpp"

namespace advaug {

// bump when a change makes old results incomparable with new ones
inline constexpr const char* kCodeVersion = "advaug-1";

// one result.csv row
struct RunRecord {
  std::string dataset;
  char id = 'a';
  std::string mode, da;
  uint64_t seed = 0;
  int subset = 0;
  double width = 0;
  int m = 0;
  int epochs = 0;
  int64_t steps = 0;
  double test_acc = 0, train_acc = 0, best_val_acc = 0, wall_s = 0;
  uint64_t config_hash = 0, group_hash = 0, code_hash = 0;
};

std::string default_data_root();  // $ADVAUG_DATA_ROOT, else /root/data

// fills every effective key (defaults, per-dataset rates, id-driven gamma)
// and rejects unknown keys; the result is the full record of a run
Config materialize(const Config& in);

// machine-local keys (paths, resume) never enter these hashes; the group
// hash additionally drops the seeds, so seed replicas share it
uint64_t config_hash_of(const Config& materialized);
uint64_t group_hash_of(const Config& materialized);

DatasetSpec dataset_spec(const Config& materialized);
TrainConfig train_config(const Config& materialized);

// materialize, prepare data, train, write config.txt / metrics.csv /
// result.csv / checkpoints under the out directory
RunRecord run_experiment(const Config& in);

// 8x8 real grid beside the 8x8 transformed grid, lossless pnm
// generator rebuilt from a snapshot, ready for Mode::sample inference
struct LoadedGenerator {
  GenConfig cfg;
  std::unique_ptr<Generator<float>> net;
};
LoadedGenerator load_generator(const std::string& ckpt_path);

void export_samples(const std::string& gen_ckpt, const PreparedData& data,
                    uint64_t noise_seed, const std::string& out_path);

// every <dir>/*/result.csv, sorted by path
std::vector<RunRecord> load_results(const std::string& dir);

struct ReportGroup {
  RunRecord like;  // representative settings; accuracy fields meaningless
  std::vector<uint64_t> seeds;
  std::vector<double> accs;
  double mean = 0, stdev = 0;
};

// groups seed replicas; refuses rows from different code versions or rows
// whose settings collide under different config groups
std::vector<ReportGroup> aggregate(const std::vector<RunRecord>& rows);
std::string render_report(const std::vector<ReportGroup>& groups);

void write_result_csv(const std::string& path, const RunRecord& r);
RunRecord parse_result_csv(const std::string& path);

}  // namespace advaug
