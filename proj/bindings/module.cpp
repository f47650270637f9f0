// python surface: experiment running, result aggregation, snapshot
// inference, and the raw affine sampler

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "advaug/harness.hpp"
#include "advaug/stn.hpp"

namespace py = pybind11;
using namespace advaug;

namespace {

using Arr = py::array_t<float, py::array::c_style | py::array::forcecast>;

Config dict_to_config(const py::dict& d) {
  Config c;
  for (auto item : d)
    c.set(py::str(item.first).cast<std::string>(),
          py::str(item.second).cast<std::string>());
  return c;
}

py::dict config_to_dict(const Config& c) {
  py::dict d;
  for (const auto& [k, v] : c.entries()) d[py::str(k)] = v;
  return d;
}

py::dict record_to_dict(const RunRecord& r) {
  py::dict d;
  d["dataset"] = r.dataset;
  d["id"] = std::string(1, r.id);
  d["mode"] = r.mode;
  d["da"] = r.da;
  d["seed"] = r.seed;
  d["subset"] = r.subset;
  d["width"] = r.width;
  d["m"] = r.m;
  d["epochs"] = r.epochs;
  d["steps"] = r.steps;
  d["test_acc"] = r.test_acc;
  d["train_acc"] = r.train_acc;
  d["best_val_acc"] = r.best_val_acc;
  d["wall_s"] = r.wall_s;
  d["config_hash"] = r.config_hash;
  d["group_hash"] = r.group_hash;
  d["code_hash"] = r.code_hash;
  return d;
}

Tensor to_tensor4(const Arr& a, const char* name) {
  auto info = a.request();
  if (info.ndim != 4) throw ShapeError(std::string(name) + " must be (B,C,H,W)");
  Tensor t(int(info.shape[0]), int(info.shape[1]), int(info.shape[2]),
           int(info.shape[3]));
  std::memcpy(t.v.data(), info.ptr, sizeof(float) * t.v.size());
  return t;
}

py::array_t<float> from_tensor(const Tensor& t) {
  py::array_t<float> a({t.b, t.c, t.h, t.w});
  std::memcpy(a.mutable_data(), t.v.data(), sizeof(float) * t.v.size());
  return a;
}

}  // namespace

PYBIND11_MODULE(_advaug, m) {
  m.doc() = "adversarial learned augmentation: training and inference";

  m.def(
      "materialize",
      [](const py::dict& d) {
        return config_to_dict(materialize(dict_to_config(d)));
      },
      py::arg("config"),
      "fill every defaulted key of an experiment config and return the"
      " complete mapping");

  m.def(
      "describe",
      [](const std::string& id) {
        if (id.size() != 1) throw ConfigError("id must be a single letter");
        return std::string(ablation_describe(id[0]));
      },
      py::arg("id"), "name the components an experiment id enables");

  m.def(
      "config_hash",
      [](const py::dict& d) {
        return config_hash_of(materialize(dict_to_config(d)));
      },
      py::arg("config"), "hash of the experiment settings, paths excluded");

  m.def(
      "group_hash",
      [](const py::dict& d) {
        return group_hash_of(materialize(dict_to_config(d)));
      },
      py::arg("config"), "config hash with seeds also excluded");

  m.def(
      "run_experiment",
      [](const py::dict& d) {
        Config c = dict_to_config(d);
        RunRecord r;
        {
          py::gil_scoped_release rel;
          r = run_experiment(c);
        }
        return record_to_dict(r);
      },
      py::arg("config"),
      "train one experiment to completion; returns its result row");

  m.def(
      "load_results",
      [](const std::string& dir) {
        py::list out;
        for (const auto& r : load_results(dir)) out.append(record_to_dict(r));
        return out;
      },
      py::arg("dir"), "parse every result row under a run directory");

  m.def(
      "report",
      [](const std::string& dir) {
        return render_report(aggregate(load_results(dir)));
      },
      py::arg("dir"), "aggregate result rows into the two accuracy tables");

  m.def(
      "export_samples",
      [](const std::string& gen, const py::dict& cfg, uint64_t noise_seed,
         const std::string& out) {
        Config c = dict_to_config(cfg);
        py::gil_scoped_release rel;
        Config mc = materialize(c);
        PreparedData data = prepare(dataset_spec(mc));
        export_samples(gen, data, noise_seed, out);
      },
      py::arg("gen"), py::arg("config"), py::arg("noise_seed") = 1,
      py::arg("out") = "samples.pgm",
      "render an 8x8 grid of training images beside their transforms");

  m.def(
      "transform",
      [](const std::string& gen, const Arr& images, uint64_t noise_seed) {
        Tensor x = to_tensor4(images, "images");
        py::gil_scoped_release rel;
        LoadedGenerator lg = load_generator(gen);
        require(x.c == lg.cfg.img_ch,
                "images do not match the snapshot's channel count");
        Rng zr(noise_seed, 0);
        Tensor z = draw_noise<float>(x.b, lg.cfg.noise_dim, zr);
        Tensor y = lg.net->forward(x, z, Mode::sample, nullptr);
        py::gil_scoped_acquire acq;
        return from_tensor(y);
      },
      py::arg("gen"), py::arg("images"), py::arg("noise_seed") = 1,
      "run normalized (B,C,32,32) images through a generator snapshot");

  m.def(
      "stn",
      [](const Arr& images, const Arr& theta) {
        Tensor x = to_tensor4(images, "images");
        auto ti = theta.request();
        if (ti.ndim != 2 || ti.shape[1] != 6)
          throw ShapeError("theta must be (B,6)");
        if (int(ti.shape[0]) != x.b)
          throw ShapeError("theta batch does not match images");
        Tensor th = Tensor::vec(x.b, 6);
        std::memcpy(th.v.data(), ti.ptr, sizeof(float) * th.v.size());
        return from_tensor(stn_forward(x, th));
      },
      py::arg("images"), py::arg("theta"),
      "affine-resample (B,C,H,W) images through per-sample theta rows");

  m.attr("__version__") = "0.1.0";
  m.attr("CODE_VERSION") = kCodeVersion;
}
