// command-line front end over the harness: run experiments, aggregate
// results, render sample grids, audit gradients

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "advaug/harness.hpp"

using namespace advaug;

namespace {

int usage() {
  std::cerr
      << "usage: advaug <verb> [--config FILE] [key=value | --key value]...\n"
         "verbs:\n"
         "  train           run one experiment and print its accuracy\n"
         "  ablate          run a set of experiment ids (ids=a,b,...,l)\n"
         "  sweep           run sizes x ids x seeds, write sweep.csv\n"
         "  export-samples  render an image grid: originals beside outputs\n"
         "  report          aggregate result rows under a directory\n"
         "  describe        print an id's components or the full config\n"
         "  grad-check      finite-difference audit of every network\n";
  return 2;
}

// --config files load in order, then flags; a flag always beats the file
Config parse_args(int argc, char** argv) {
  Config c;
  std::vector<std::string> overrides;
  for (int i = 2; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config") {
      if (++i >= argc) throw ConfigError("--config needs a file");
      for (const auto& [k, v] : load_config(argv[i]).entries()) c.set(k, v);
      continue;
    }
    size_t eq = a.find('=');
    bool dashed = a.rfind("--", 0) == 0;
    if (dashed && eq == std::string::npos) {
      if (++i >= argc) throw ConfigError(a + " needs a value");
      overrides.push_back(a.substr(2) + "=" + argv[i]);
    } else if (eq != std::string::npos) {
      overrides.push_back(dashed ? a.substr(2) : a);
    } else {
      throw ConfigError("unrecognized argument '" + a + "'");
    }
  }
  apply_overrides(c, overrides);
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void print_record(const RunRecord& r) {
  std::printf("%s subset=%d id=%c mode=%s da=%s seed=%llu: test %.2f%%"
              " (best val %.2f%%) %lld steps %.0fs\n",
              r.dataset.c_str(), r.subset, r.id, r.mode.c_str(), r.da.c_str(),
              (unsigned long long)r.seed, r.test_acc, r.best_val_acc,
              (long long)r.steps, r.wall_s);
  std::fflush(stdout);
}

int cmd_train(const Config& c) {
  print_record(run_experiment(c));
  return 0;
}

int cmd_ablate(Config c) {
  auto ids = split_list(c.get_or("ids", "a,b,c,d,e,f,g,h,l"));
  c.erase("ids");
  std::vector<RunRecord> rows;
  for (const auto& id : ids) {
    Config ci = c;
    ci.set("id", id);
    // per-id runs pick their own output directory and default mode
    ci.erase("out");
    if (!c.has("mode")) ci.erase("mode");
    rows.push_back(run_experiment(ci));
    print_record(rows.back());
  }
  std::printf("\n%s", render_report(aggregate(rows)).c_str());
  return 0;
}

int cmd_sweep(Config c) {
  auto sizes = split_list(c.get("sizes"));
  auto ids = split_list(c.get_or("ids", "a,l"));
  auto seeds = split_list(c.get_or("seeds", "1"));
  std::string csv_path = c.get_or("sweep_out", "sweep.csv");
  for (const char* k : {"sizes", "ids", "seeds", "sweep_out"}) c.erase(k);
  std::ofstream csv(csv_path);
  if (!csv) throw FileError("cannot write " + csv_path);
  csv << "size,policy,accuracy,seed\n";
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  for (const auto& size : sizes)
    for (const auto& id : ids)
      for (const auto& seed : seeds) {
        Config ci = c;
        ci.set("subset", size);
        ci.set("id", id);
        ci.set("seed", seed);
        ci.erase("out");
        RunRecord r = run_experiment(ci);
        print_record(r);
        std::string policy = std::string(1, r.id);
        if (r.da != "none") policy += "+" + r.da;
        char row[128];
        std::snprintf(row, sizeof row, "%d,%s,%.4f,%llu\n", r.subset,
                      policy.c_str(), r.test_acc, (unsigned long long)r.seed);
        csv << row;
        cells[{size, policy}].push_back(r.test_acc);
      }
  if (!csv) throw FileError("write failed for " + csv_path);
  std::printf("\nsize     policy       mean    std\n");
  for (const auto& [key, accs] : cells) {
    double m = 0;
    for (double a : accs) m += a;
    m /= double(accs.size());
    double v = 0;
    for (double a : accs) v += (a - m) * (a - m);
    double sd = accs.size() > 1 ? std::sqrt(v / double(accs.size() - 1)) : 0.0;
    std::printf("%-8s %-10s %7.2f %6.2f\n", key.first.c_str(),
                key.second.c_str(), m, sd);
  }
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

int cmd_export(Config c) {
  std::string gen = c.get("gen");
  std::string out = c.get_or("out", "");
  uint64_t zseed = uint64_t(c.get_int_or("seed_noise", 1));
  for (const char* k : {"gen", "out"}) c.erase(k);
  Config m = materialize(c);
  PreparedData data = prepare(dataset_spec(m));
  if (out.empty()) out = data.img_ch == 1 ? "samples.pgm" : "samples.ppm";
  export_samples(gen, data, zseed, out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_report(const Config& c) {
  std::string dir = c.get_or("dir", "runs");
  std::printf("%s", render_report(aggregate(load_results(dir))).c_str());
  return 0;
}

int cmd_describe(const Config& c) {
  if (c.has("id") && c.entries().size() == 1) {
    const std::string& id = c.get("id");
    if (id.size() != 1) throw ConfigError("id must be a single letter");
    std::printf("%c: %s\n", id[0], ablation_describe(id[0]));
    return 0;
  }
  Config m = materialize(c);
  std::printf("# %s\n%s", ablation_describe(m.get("id")[0]),
              m.canonical().c_str());
  return 0;
}

// deterministic probe loss sum(out * r) for finite differences
struct Probe {
  TensorT<double> r;
  bool ready = false;
  void init(const TensorT<double>& like, Rng& rng) {
    r = like;
    for (auto& v : r.v) v = rng.uniform(-1.0, 1.0);
    ready = true;
  }
  double loss(const TensorT<double>& out) {
    double s = 0;
    for (size_t i = 0; i < out.v.size(); ++i) s += out.v[i] * double(r.v[i]);
    return s;
  }
};

template <class F>
bool fd_audit(const char* name, std::vector<ParamRef<double>> ps, F f,
              double tol, double& worst) {
  Rng pick(99, 0);
  auto rep = grad_check(ps, f, 1e-7, 2, pick);
  std::printf("%-12s groups %3zu  max rel err %.3e  (%s)\n", name,
              rep.groups.size(), rep.max_rel_err, rep.worst.c_str());
  worst = std::max(worst, rep.max_rel_err);
  return rep.pass(tol);
}

int cmd_grad_check(const Config& c) {
  double tol = c.get_num_or("tol", 1e-4);
  using DT = TensorT<double>;
  Rng data_rng(5, 0);
  auto rand_img = [&](int b, int ch) {
    DT x(b, ch, 32, 32);
    for (auto& v : x.v) v = data_rng.normal();
    return x;
  };
  DT x = rand_img(2, 1), x2 = rand_img(2, 1);
  Rng zrng(6, 0);
  DT z = draw_noise<double>(2, 100, zrng);
  double worst = 0;
  bool ok = true;

  {
    GenConfig gc;
    gc.width = 0.0625;
    Rng rng(21, 0);
    Generator<double> g(gc, rng);
    // nudge the zero-initialized heads off zero and theta off the identity,
    // where the sampling grid sits on bilinear kinks
    for (auto& p : g.params()) {
      if (p.name.find("head.fc2.b") != std::string::npos) {
        const double off[6] = {0.137, -0.211, 0.093, 0.172, -0.256, 0.064};
        for (size_t j = 0; j < p.val->size(); ++j) (*p.val)[j] += off[j % 6];
        continue;
      }
      for (size_t j = 0; j < p.val->size(); j += 3)
        (*p.val)[j] += 0.01 * double(int(j % 7) - 3);
    }
    g.freeze_running(true);
    Probe pr;
    Rng prng(7, 0);
    auto ps = g.params();
    auto f = [&]() {
      zero_grads(ps);
      g.clear_ctx();
      DT out = g.forward(x, z, Mode::train, nullptr);
      if (!pr.ready) pr.init(out, prng);
      g.backward(pr.r);
      return pr.loss(out);
    };
    ok &= fd_audit("generator", ps, f, tol, worst);
  }
  {
    Rng rng(22, 0);
    ClassDisc<double> dc(1, 0.125, rng);
    Probe pr;
    Rng prng(8, 0);
    auto ps = dc.params();
    auto f = [&]() {
      zero_grads(ps);
      Rng drop(17, 0);
      DT out = dc.forward(x, {3, 7}, Mode::train, &drop);
      if (!pr.ready) pr.init(out, prng);
      dc.backward(pr.r);
      return pr.loss(out);
    };
    ok &= fd_audit("class disc", ps, f, tol, worst);
  }
  {
    Rng rng(23, 0);
    DissimDisc<double> dd(1, 0.125, rng);
    Probe pr;
    Rng prng(9, 0);
    auto ps = dd.params();
    auto f = [&]() {
      zero_grads(ps);
      Rng drop(18, 0);
      DT out = dd.forward(x, x2, Mode::train, &drop);
      if (!pr.ready) pr.init(out, prng);
      dd.backward(pr.r);
      return pr.loss(out);
    };
    ok &= fd_audit("dissim disc", ps, f, tol, worst);
  }
  {
    Rng rng(24, 0);
    Classifier<double> cls(1, 0.125, rng);
    Probe pr;
    Rng prng(10, 0);
    auto ps = cls.params();
    auto f = [&]() {
      zero_grads(ps);
      Rng drop(19, 0);
      DT out = cls.forward(x, Mode::train, &drop);
      if (!pr.ready) pr.init(out, prng);
      cls.backward(pr.r);
      return pr.loss(out);
    };
    ok &= fd_audit("classifier", ps, f, tol, worst);
  }
  std::printf("overall max rel err %.3e, tolerance %g: %s\n", worst, tol,
              ok ? "pass" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  std::string verb = argv[1];
  try {
    Config c = parse_args(argc, argv);
    if (verb == "train") return cmd_train(c);
    if (verb == "ablate") return cmd_ablate(std::move(c));
    if (verb == "sweep") return cmd_sweep(std::move(c));
    if (verb == "export-samples") return cmd_export(std::move(c));
    if (verb == "report") return cmd_report(c);
    if (verb == "describe") return cmd_describe(c);
    if (verb == "grad-check") return cmd_grad_check(c);
    std::cerr << "unknown verb '" << verb << "'\n";
    return usage();
  } catch (const std::exception& e) {
    std::cerr << "advaug: " << e.what() << "\n";
    return 1;
  }
}
