#include "advaug/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "advaug/checkpoint.hpp"
#include "advaug/image_io.hpp"

namespace advaug {

namespace fs = std::filesystem;

std::string default_data_root() {
  const char* env = std::getenv("ADVAUG_DATA_ROOT");
  return env ? env : "/root/data";
}

namespace {

// machine-local keys: paths and resume flags carry no experiment semantics
const std::vector<std::string> kLocalKeys = {"data_root", "gen_snapshot",
                                             "out", "resume"};

const std::set<std::string> kKnown = {
    "dataset",     "data_root",   "subset",       "val_fraction",
    "per_channel_norm",           "id",           "mode",
    "da",          "m",           "epochs",       "width",
    "noise_dim",   "head_hidden", "lr_common",    "lr_classifier",
    "alpha",       "beta",        "gamma",        "seed",
    "seed_split",  "seed_init",   "seed_data",    "seed_noise",
    "seed_dropout",               "snapshot_epochs",
    "eval_every",  "eval_max_n",  "ckpt_every",   "resume",
    "gen_snapshot",               "out",          "out_root"};

std::string family_of(const std::string& dataset) {
  size_t dash = dataset.find('-');
  return dash == std::string::npos ? dataset : dataset.substr(0, dash);
}

std::string lr_classifier_default(const std::string& family) {
  if (family == "mnist") return "0.001";
  if (family == "svhn") return "0.0005";
  if (family == "cifar10") return "0.006";
  if (family == "fmnist") return "0.0001";
  throw ConfigError("no classifier rate known for dataset '" + family + "'");
}

struct WeightStrings {
  const char *alpha, *beta, *gamma;
};

WeightStrings weight_defaults(const std::string& family) {
  if (family == "mnist" || family == "fmnist") return {"0.1", "0.05", "0.005"};
  if (family == "svhn") return {"1", "1", "0.0005"};
  if (family == "cifar10") return {"0.1", "0.05", "0.001"};
  throw ConfigError("no loss weights known for dataset '" + family + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      size_t used = 0;
      int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + tok + "' is not an integer");
    }
  }
  return out;
}

constexpr const char* kResultHeader =
    "dataset,id,mode,da,seed,subset,width,m,epochs,steps,test_acc,train_acc,"
    "best_val_acc,wall_s,config_hash,group_hash,code_hash";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

uint64_t config_hash_of(const Config& c) { return c.hash_skipping(kLocalKeys); }

uint64_t group_hash_of(const Config& c) {
  auto skip = kLocalKeys;
  skip.push_back("seed");
  return c.hash_skipping(skip);
}

Config materialize(const Config& in) {
  for (const auto& [k, v] : in.entries())
    if (!kKnown.count(k)) throw ConfigError("unknown config key '" + k + "'");
  Config c = in;
  auto def = [&](const char* k, const std::string& v) {
    if (!c.has(k)) c.set(k, v);
  };
  def("dataset", "mnist");
  const std::string family = family_of(c.get("dataset"));
  def("data_root", default_data_root());
  def("subset", "550");
  def("val_fraction", "0.1");
  def("per_channel_norm",
      family == "cifar10" || family == "svhn" ? "1" : "0");
  def("id", "l");
  const std::string id_s = c.get("id");
  if (id_s.size() != 1) throw ConfigError("id must be a single letter");
  ablation_mask(id_s[0]);  // rejects unknown ids early
  def("mode", id_s == "a" ? "baseline" : "joint");
  def("da", "none");
  def("m", "64");
  def("epochs", "200");
  def("width", "0.25");
  def("noise_dim", "100");
  def("head_hidden", "128");
  def("lr_common", "0.0005");
  def("lr_classifier", lr_classifier_default(family));
  WeightStrings w = weight_defaults(family);
  def("alpha", w.alpha);
  def("beta", w.beta);
  // row h is row l with the classifier-fooling term cut to zero
  def("gamma", id_s == "h" ? "0" : w.gamma);
  def("seed", "1");
  const std::string seed = c.get("seed");
  const uint64_t s = uint64_t(c.get_int("seed"));
  def("seed_split", seed);
  def("seed_init", seed);
  def("seed_data", std::to_string(s + 1));
  def("seed_noise", std::to_string(s + 2));
  def("seed_dropout", std::to_string(s + 3));
  def("snapshot_epochs", "");
  def("eval_every", "25");
  def("eval_max_n", "2000");
  def("ckpt_every", "10");
  def("resume", "0");
  def("gen_snapshot", "");
  def("out_root", "runs");
  def("out", c.get("out_root") + "/" + c.get("dataset") + "-" +
                 c.get("subset") + "-" + id_s + "-" + c.get("mode") + "-" +
                 c.get("da") + "-s" + seed);
  return c;
}

DatasetSpec dataset_spec(const Config& c) {
  DatasetSpec d;
  d.name = c.get("dataset");
  d.data_root = c.get("data_root");
  d.subset_size = size_t(c.get_int("subset"));
  d.val_fraction = c.get_num("val_fraction");
  d.seed = uint64_t(c.get_int("seed_split"));
  d.per_channel_norm = c.get_bool_or("per_channel_norm", false);
  return d;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.m = int(c.get_int("m"));
  t.n_iter = int(c.get_int("epochs"));
  t.lr_common = c.get_num("lr_common");
  t.lr_classifier = c.get_num("lr_classifier");
  t.weights.alpha = float(c.get_num("alpha"));
  t.weights.beta = float(c.get_num("beta"));
  t.weights.gamma = float(c.get_num("gamma"));
  t.width = c.get_num("width");
  t.noise_dim = int(c.get_int("noise_dim"));
  t.head_hidden = int(c.get_int("head_hidden"));
  t.seeds.init = uint64_t(c.get_int("seed_init"));
  t.seeds.data = uint64_t(c.get_int("seed_data"));
  t.seeds.noise = uint64_t(c.get_int("seed_noise"));
  t.seeds.dropout = uint64_t(c.get_int("seed_dropout"));
  t.mode = parse_run_mode(c.get("mode"));
  t.mask = ablation_mask(c.get("id")[0]);
  t.da.kind = parse_da_kind(c.get("da"));
  // digits must not mirror; flips are reserved for cifar10's strong policy
  t.da.flip_enabled = family_of(c.get("dataset")) == "cifar10";
  t.snapshot_epochs = parse_int_list("snapshot_epochs", c.get("snapshot_epochs"));
  t.eval_every = int(c.get_int("eval_every"));
  t.eval_max_n = int(c.get_int("eval_max_n"));
  t.ckpt_every = int(c.get_int("ckpt_every"));
  t.out_dir = c.get("out");
  t.config_hash = config_hash_of(c);
  return t;
}

RunRecord run_experiment(const Config& in) {
  Config c = materialize(in);
  DatasetSpec ds = dataset_spec(c);
  TrainConfig tc = train_config(c);
  tc.validate();
  if (tc.mode == RunMode::separate && c.get("gen_snapshot").empty())
    throw ConfigError("separate mode needs gen_snapshot=<file>");
  PreparedData data = prepare(ds);
  fs::create_directories(tc.out_dir);
  {
    std::ofstream rec(tc.out_dir + "/config.txt");
    if (!rec) throw FileError("cannot write " + tc.out_dir + "/config.txt");
    rec << c.canonical();
  }
  Trainer tr(tc, data);
  if (c.get_bool_or("resume", false) && fs::exists(tc.out_dir + "/last.ckpt"))
    tr.load_checkpoint(tc.out_dir + "/last.ckpt");
  if (tc.mode == RunMode::separate)
    tr.load_generator_snapshot(c.get("gen_snapshot"));
  RunResult res = tr.run();
  RunRecord r;
  r.dataset = c.get("dataset");
  r.id = c.get("id")[0];
  r.mode = c.get("mode");
  r.da = c.get("da");
  r.seed = uint64_t(c.get_int("seed"));
  r.subset = int(c.get_int("subset"));
  r.width = c.get_num("width");
  r.m = tc.m;
  r.epochs = tc.n_iter;
  r.steps = res.steps;
  r.test_acc = res.final_test_acc;
  r.train_acc = res.final_train_acc;
  r.best_val_acc = res.best_val_acc;
  r.wall_s = res.wall_s;
  r.config_hash = config_hash_of(c);
  r.group_hash = group_hash_of(c);
  r.code_hash = fnv1a(kCodeVersion);
  write_result_csv(tc.out_dir + "/result.csv", r);
  return r;
}

LoadedGenerator load_generator(const std::string& ckpt_path) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  if (ck.str("format") != "advaug-gen")
    throw StateError(ckpt_path + " is not a generator snapshot");
  LoadedGenerator lg;
  lg.cfg.img_ch = int(ck.get_int("img_ch"));
  lg.cfg.noise_dim = int(ck.get_int("noise_dim"));
  lg.cfg.width = ck.get_num("width");
  lg.cfg.use_stn = ck.get_int("use_stn") != 0;
  lg.cfg.use_unet = ck.get_int("use_unet") != 0;
  lg.cfg.noise_decoder = ck.get_int("noise_decoder") != 0;
  lg.cfg.unshare_encoder = ck.get_int("unshare_encoder") != 0;
  lg.cfg.head_hidden = int(ck.get_int("head_hidden"));
  Rng init(1, 0);
  lg.net = std::make_unique<Generator<float>>(lg.cfg, init);
  auto ps = lg.net->params();
  get_params(ck, "p", ps);
  auto bs = lg.net->buffers();
  get_buffers(ck, "b", bs);
  return lg;
}

void export_samples(const std::string& gen_ckpt, const PreparedData& data,
                    uint64_t noise_seed, const std::string& out_path) {
  LoadedGenerator lg = load_generator(gen_ckpt);
  const GenConfig& gc = lg.cfg;
  Generator<float>& gen = *lg.net;
  require(gc.img_ch == data.img_ch,
          "snapshot channel count does not match the dataset");
  require(data.train_x.b >= 64, "grid export needs 64 training samples");
  Tensor x(64, data.train_x.c, data.train_x.h, data.train_x.w);
  std::copy_n(data.train_x.v.begin(), x.v.size(), x.v.begin());
  Rng zr(noise_seed, 0);
  Tensor z = draw_noise<float>(64, gc.noise_dim, zr);
  Tensor xg = gen.forward(x, z, Mode::sample, nullptr);
  ImageU8 left = tile_grid(x, data.stats, 8, 8);
  ImageU8 right = tile_grid(xg, data.stats, 8, 8);
  write_pnm(out_path, hstack(left, right));
}

void write_result_csv(const std::string& path, const RunRecord& r) {
  std::ofstream os(path);
  if (!os) throw FileError("cannot write " + path);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s,%c,%s,%s,%llu,%d,%g,%d,%d,%lld,%.4f,%.4f,%.4f,%.1f,"
                "%016llx,%016llx,%016llx",
                r.dataset.c_str(), r.id, r.mode.c_str(), r.da.c_str(),
                (unsigned long long)r.seed, r.subset, r.width, r.m, r.epochs,
                (long long)r.steps, r.test_acc, r.train_acc, r.best_val_acc,
                r.wall_s, (unsigned long long)r.config_hash,
                (unsigned long long)r.group_hash,
                (unsigned long long)r.code_hash);
  os << kResultHeader << "\n" << buf << "\n";
  if (!os) throw FileError("write failed for " + path);
}

RunRecord parse_result_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open " + path);
  std::string header, line;
  if (!std::getline(is, header) || !std::getline(is, line))
    throw FormatError(path + ": expected a header and one row");
  if (header != kResultHeader)
    throw FormatError(path + ": unrecognized result header");
  auto f = split_csv(line);
  if (f.size() != 17) throw FormatError(path + ": wrong column count");
  try {
    RunRecord r;
    r.dataset = f[0];
    r.id = f[1].empty() ? '?' : f[1][0];
    r.mode = f[2];
    r.da = f[3];
    r.seed = std::stoull(f[4]);
    r.subset = std::stoi(f[5]);
    r.width = std::stod(f[6]);
    r.m = std::stoi(f[7]);
    r.epochs = std::stoi(f[8]);
    r.steps = std::stoll(f[9]);
    r.test_acc = std::stod(f[10]);
    r.train_acc = std::stod(f[11]);
    r.best_val_acc = std::stod(f[12]);
    r.wall_s = std::stod(f[13]);
    r.config_hash = std::stoull(f[14], nullptr, 16);
    r.group_hash = std::stoull(f[15], nullptr, 16);
    r.code_hash = std::stoull(f[16], nullptr, 16);
    return r;
  } catch (const std::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<RunRecord> load_results(const std::string& dir) {
  if (!fs::exists(dir))
    throw DataError("no runs found: " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "result.csv"))
      files.push_back(e.path() / "result.csv");
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> rows;
  rows.reserve(files.size());
  for (const auto& f : files) rows.push_back(parse_result_csv(f.string()));
  if (rows.empty()) throw DataError("no runs found in " + dir);
  return rows;
}

std::vector<ReportGroup> aggregate(const std::vector<RunRecord>& rows) {
  if (rows.empty()) throw DataError("no runs to aggregate");
  for (const auto& r : rows)
    if (r.code_hash != rows[0].code_hash)
      throw StateError("refusing to merge results from different code versions");
  std::map<uint64_t, ReportGroup> by_group;
  for (const auto& r : rows) {
    auto& g = by_group[r.group_hash];
    if (g.accs.empty()) g.like = r;
    g.seeds.push_back(r.seed);
    g.accs.push_back(r.test_acc);
  }
  // the same experiment label must not hide two different configurations
  std::map<std::string, uint64_t> label_to_group;
  for (const auto& [gh, g] : by_group) {
    const RunRecord& r = g.like;
    std::string label = r.dataset + "|" + std::string(1, r.id) + "|" + r.mode +
                        "|" + r.da + "|" + std::to_string(r.subset);
    auto [it, fresh] = label_to_group.emplace(label, gh);
    if (!fresh)
      throw StateError("refusing to merge: runs labeled " + label +
                       " were produced under different configs");
  }
  std::vector<ReportGroup> out;
  out.reserve(by_group.size());
  for (auto& [gh, g] : by_group) {
    double s = 0;
    for (double a : g.accs) s += a;
    g.mean = s / double(g.accs.size());
    double v = 0;
    for (double a : g.accs) v += (a - g.mean) * (a - g.mean);
    g.stdev = g.accs.size() > 1 ? std::sqrt(v / double(g.accs.size() - 1)) : 0.0;
    out.push_back(std::move(g));
  }
  std::sort(out.begin(), out.end(),
            [](const ReportGroup& a, const ReportGroup& b) {
              return std::tie(a.like.dataset, a.like.subset, a.like.id,
                              a.like.mode, a.like.da) <
                     std::tie(b.like.dataset, b.like.subset, b.like.id,
                              b.like.mode, b.like.da);
            });
  return out;
}

std::string render_report(const std::vector<ReportGroup>& groups) {
  std::ostringstream os;
  const char* head =
      "dataset   subset id mode      da      n    mean    std  seeds\n";
  char buf[256];
  auto line = [&](const ReportGroup& g) {
    std::string seeds;
    for (size_t i = 0; i < g.seeds.size(); ++i)
      seeds += (i ? "," : "") + std::to_string(g.seeds[i]);
    std::snprintf(buf, sizeof buf,
                  "%-9s %6d %c  %-9s %-6s %2zu %7.2f %6.2f  %s\n",
                  g.like.dataset.c_str(), g.like.subset, g.like.id,
                  g.like.mode.c_str(), g.like.da.c_str(), g.accs.size(),
                  g.mean, g.stdev, seeds.c_str());
    os << buf;
  };
  os << "baselines and full model\n" << head;
  for (const auto& g : groups)
    if (g.like.id == 'a' || g.like.id == 'l') line(g);
  os << "\nablation grid\n" << head;
  for (const auto& g : groups) line(g);
  return os.str();
}

}  // namespace advaug
