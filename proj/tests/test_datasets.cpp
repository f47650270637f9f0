#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "advaug/datasets.hpp"
#include "advaug/errors.hpp"

using namespace advaug;
namespace fs = std::filesystem;

namespace {

fs::path fixture_dir() {
  auto d = fs::temp_directory_path() / "advaug_ds_fixtures";
  fs::create_directories(d);
  return d;
}

void write_bytes(const fs::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void push_u32_be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

std::vector<uint8_t> idx_image_bytes(int n, int h, int w,
                                     const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> v;
  push_u32_be(v, 2051);
  push_u32_be(v, uint32_t(n));
  push_u32_be(v, uint32_t(h));
  push_u32_be(v, uint32_t(w));
  v.insert(v.end(), payload.begin(), payload.end());
  return v;
}

std::vector<uint8_t> idx_label_bytes(const std::vector<uint8_t>& labels) {
  std::vector<uint8_t> v;
  push_u32_be(v, 2049);
  push_u32_be(v, uint32_t(labels.size()));
  v.insert(v.end(), labels.begin(), labels.end());
  return v;
}

}  // namespace

TEST_CASE("idx image file of dims (1,28,28) with zero payload loads one blank image") {
  auto p = fixture_dir() / "zero-images";
  write_bytes(p, idx_image_bytes(1, 28, 28, std::vector<uint8_t>(784, 0)));
  RawImages imgs = load_idx_images(p.string());
  CHECK(imgs.n == 1);
  CHECK(imgs.c == 1);
  CHECK(imgs.h == 28);
  CHECK(imgs.w == 28);
  REQUIRE(imgs.bytes.size() == 784);
  for (uint8_t b : imgs.bytes) CHECK(b == 0);
}

TEST_CASE("idx label file with bytes 0..9 loads the sequence 0..9") {
  std::vector<uint8_t> labels(10);
  std::iota(labels.begin(), labels.end(), uint8_t(0));
  auto p = fixture_dir() / "ramp-labels";
  write_bytes(p, idx_label_bytes(labels));
  auto got = load_idx_labels(p.string());
  CHECK(got == labels);
}

TEST_CASE("idx loader rejects bad magic, truncation, and trailing bytes") {
  auto d = fixture_dir();

  auto bad = idx_image_bytes(1, 28, 28, std::vector<uint8_t>(784, 0));
  bad[3] = 0x42;
  write_bytes(d / "bad-magic", bad);
  CHECK_THROWS_AS(load_idx_images((d / "bad-magic").string()), FormatError);

  auto shrt = idx_image_bytes(2, 28, 28, std::vector<uint8_t>(784, 0));
  write_bytes(d / "short", shrt);
  CHECK_THROWS_AS(load_idx_images((d / "short").string()), FormatError);

  auto extra = idx_image_bytes(1, 28, 28, std::vector<uint8_t>(785, 0));
  write_bytes(d / "extra", extra);
  CHECK_THROWS_AS(load_idx_images((d / "extra").string()), FormatError);

  auto badlab = idx_label_bytes({1, 2, 3});
  badlab[3] = 0x03;
  write_bytes(d / "bad-label-magic", badlab);
  CHECK_THROWS_AS(load_idx_labels((d / "bad-label-magic").string()), FormatError);

  CHECK_THROWS_AS(load_idx_images((d / "missing-file").string()), DataError);
}

TEST_CASE("idx image/label count mismatch is rejected") {
  auto d = fixture_dir();
  write_bytes(d / "mm-img", idx_image_bytes(2, 28, 28, std::vector<uint8_t>(1568, 7)));
  write_bytes(d / "mm-lab", idx_label_bytes({1, 2, 3}));
  CHECK_THROWS_AS(load_idx((d / "mm-img").string(), (d / "mm-lab").string()),
                  FormatError);
}

TEST_CASE("cifar record of all-255 pixels loads one white image with label 0") {
  std::vector<uint8_t> rec(3073, 255);
  rec[0] = 0;
  auto p = fixture_dir() / "white.bin";
  write_bytes(p, rec);
  RawDataset ds = load_cifar10({p.string()});
  CHECK(ds.images.n == 1);
  CHECK(ds.images.c == 3);
  CHECK(ds.images.h == 32);
  CHECK(ds.images.w == 32);
  REQUIRE(ds.labels.size() == 1);
  CHECK(ds.labels[0] == 0);
  for (uint8_t b : ds.images.bytes) CHECK(b == 255);
}

TEST_CASE("cifar R-plane ramp reproduces exactly in channel 0") {
  std::vector<uint8_t> rec(3073, 0);
  rec[0] = 3;
  for (int i = 0; i < 1024; ++i) rec[size_t(1 + i)] = uint8_t(i % 256);
  for (int i = 0; i < 2048; ++i) rec[size_t(1025 + i)] = 17;
  auto p = fixture_dir() / "ramp.bin";
  write_bytes(p, rec);
  RawDataset ds = load_cifar10({p.string()});
  REQUIRE(ds.images.bytes.size() == 3072);
  for (int i = 0; i < 1024; ++i) CHECK(ds.images.bytes[size_t(i)] == uint8_t(i % 256));
  for (int i = 1024; i < 3072; ++i) CHECK(ds.images.bytes[size_t(i)] == 17);
  CHECK(ds.labels[0] == 3);
}

TEST_CASE("cifar loader rejects bad sizes and out-of-range labels") {
  auto d = fixture_dir();
  write_bytes(d / "odd.bin", std::vector<uint8_t>(3072, 0));
  CHECK_THROWS_AS(load_cifar10({(d / "odd.bin").string()}), FormatError);

  std::vector<uint8_t> rec(3073, 0);
  rec[0] = 11;
  write_bytes(d / "bad-label.bin", rec);
  CHECK_THROWS_AS(load_cifar10({(d / "bad-label.bin").string()}), DataError);
}

TEST_CASE("loader round-trip reproduces source bytes exactly") {
  auto d = fixture_dir();
  Rng rng(99, 0);

  std::vector<uint8_t> payload(3 * 784);
  for (auto& b : payload) b = uint8_t(rng.uniform_int(256));
  std::vector<uint8_t> labels = {4, 0, 9};
  auto img_bytes = idx_image_bytes(3, 28, 28, payload);
  auto lab_bytes = idx_label_bytes(labels);
  write_bytes(d / "rt-img", img_bytes);
  write_bytes(d / "rt-lab", lab_bytes);

  RawDataset ds = load_idx((d / "rt-img").string(), (d / "rt-lab").string());
  save_idx_images((d / "rt-img2").string(), ds.images);
  save_idx_labels((d / "rt-lab2").string(), ds.labels);
  CHECK(read_bytes(d / "rt-img2") == img_bytes);
  CHECK(read_bytes(d / "rt-lab2") == lab_bytes);

  for (int i = 0; i < 3; ++i) {
    auto rec = idx_record(ds.images, i);
    std::vector<uint8_t> src(payload.begin() + i * 784, payload.begin() + (i + 1) * 784);
    CHECK(rec == src);
  }

  std::vector<uint8_t> cif;
  for (int r = 0; r < 2; ++r) {
    cif.push_back(uint8_t(r));
    for (int i = 0; i < 3072; ++i) cif.push_back(uint8_t(rng.uniform_int(256)));
  }
  write_bytes(d / "rt.bin", cif);
  RawDataset cds = load_cifar10({(d / "rt.bin").string()});
  save_cifar10((d / "rt2.bin").string(), cds);
  CHECK(read_bytes(d / "rt2.bin") == cif);
  for (int r = 0; r < 2; ++r) {
    auto rec = cifar_record(cds, r);
    std::vector<uint8_t> src(cif.begin() + r * 3073, cif.begin() + (r + 1) * 3073);
    CHECK(rec == src);
  }
}

namespace {

// labels 0..9 cycling, n samples
std::vector<uint8_t> cyclic_labels(size_t n) {
  std::vector<uint8_t> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = uint8_t(i % 10);
  return y;
}

}  // namespace

TEST_CASE("subset of 550 with val_fraction 0 gives 55 samples per class") {
  auto labels = cyclic_labels(6000);
  DatasetSpec spec;
  spec.subset_size = 550;
  spec.seed = 7;
  SubsetSplit s = make_subset(spec, labels);
  CHECK(s.train_idx.size() == 550);
  CHECK(s.val_idx.empty());
  std::vector<int> per_class(10, 0);
  for (uint32_t i : s.train_idx) per_class[labels[i]]++;
  for (int c = 0; c < 10; ++c) CHECK(per_class[size_t(c)] == 55);
}

TEST_CASE("subset equal to the full set is the identity split") {
  auto labels = cyclic_labels(200);
  DatasetSpec spec;
  spec.subset_size = 200;
  SubsetSplit s = make_subset(spec, labels);
  REQUIRE(s.train_idx.size() == 200);
  CHECK(s.val_idx.empty());
  for (uint32_t i = 0; i < 200; ++i) CHECK(s.train_idx[i] == i);

  spec.subset_size = 0;  // "full"
  SubsetSplit s2 = make_subset(spec, labels);
  CHECK(s2.train_idx == s.train_idx);
}

TEST_CASE("same seed gives identical subsets, different seeds differ") {
  auto labels = cyclic_labels(6000);
  DatasetSpec spec;
  spec.subset_size = 550;
  spec.seed = 42;
  SubsetSplit a = make_subset(spec, labels);
  SubsetSplit b = make_subset(spec, labels);
  CHECK(a.train_idx == b.train_idx);
  spec.seed = 43;
  SubsetSplit c = make_subset(spec, labels);
  CHECK(a.train_idx != c.train_idx);
}

TEST_CASE("subset size not divisible by 10 stays balanced within one sample") {
  auto labels = cyclic_labels(6000);
  DatasetSpec spec;
  spec.subset_size = 557;
  spec.seed = 3;
  SubsetSplit s = make_subset(spec, labels);
  CHECK(s.train_idx.size() == 557);
  std::vector<int> per_class(10, 0);
  for (uint32_t i : s.train_idx) per_class[labels[i]]++;
  int lo = *std::min_element(per_class.begin(), per_class.end());
  int hi = *std::max_element(per_class.begin(), per_class.end());
  CHECK(lo >= 55);
  CHECK(hi <= 56);
  CHECK(std::accumulate(per_class.begin(), per_class.end(), 0) == 557);
}

TEST_CASE("val_fraction carves validation samples out of every class") {
  auto labels = cyclic_labels(6000);
  DatasetSpec spec;
  spec.subset_size = 550;
  spec.val_fraction = 0.2;
  spec.seed = 11;
  SubsetSplit s = make_subset(spec, labels);
  CHECK(s.train_idx.size() == 440);
  CHECK(s.val_idx.size() == 110);
  std::vector<int> val_per_class(10, 0);
  for (uint32_t i : s.val_idx) val_per_class[labels[i]]++;
  for (int c = 0; c < 10; ++c) CHECK(val_per_class[size_t(c)] == 11);
  std::set<uint32_t> train_set(s.train_idx.begin(), s.train_idx.end());
  for (uint32_t i : s.val_idx) CHECK(train_set.count(i) == 0);
}

TEST_CASE("subset errors: too large, too small, starving a class") {
  auto labels = cyclic_labels(100);
  DatasetSpec spec;
  spec.subset_size = 101;
  CHECK_THROWS_AS(make_subset(spec, labels), ConfigError);
  spec.subset_size = 5;
  CHECK_THROWS_AS(make_subset(spec, labels), ConfigError);

  std::vector<uint8_t> skewed(100, 0);
  skewed[0] = 1;  // class 1 has a single sample
  for (size_t i = 0; i < 30; ++i) skewed[70 + i] = uint8_t(2 + i % 8);
  spec.subset_size = 40;
  CHECK_THROWS_AS(make_subset(spec, skewed), ConfigError);
}

TEST_CASE("two-pass statistics match an independent accumulation") {
  RawImages imgs;
  imgs.n = 8;
  imgs.c = 1;
  imgs.h = 28;
  imgs.w = 28;
  Rng rng(5, 0);
  imgs.bytes.resize(8 * 784);
  for (auto& b : imgs.bytes) b = uint8_t(rng.uniform_int(256));
  std::vector<uint32_t> idx = {0, 2, 5, 7};

  double s = 0;
  for (uint32_t i : idx)
    for (int j = 0; j < 784; ++j) s += imgs.sample(int(i))[j];
  double mu = s / (4 * 784.0);
  double q = 0;
  for (uint32_t i : idx)
    for (int j = 0; j < 784; ++j) {
      double d = imgs.sample(int(i))[j] - mu;
      q += d * d;
    }
  double sigma = std::sqrt(q / (4 * 784.0));

  PixelStats st = compute_stats(imgs, idx, false);
  REQUIRE(st.mu.size() == 1);
  CHECK(st.mu[0] == doctest::Approx(mu).epsilon(1e-12));
  CHECK(st.sigma[0] == doctest::Approx(sigma).epsilon(1e-12));

  // normalized original pixel region has mean ~0 and std ~1
  Tensor t = preprocess(imgs, idx, st);
  CHECK(t.b == 4);
  CHECK(t.c == 1);
  CHECK(t.h == 32);
  CHECK(t.w == 32);
  double ns = 0, nq = 0;
  for (int b = 0; b < 4; ++b)
    for (int y = 2; y < 30; ++y)
      for (int x = 2; x < 30; ++x) ns += t(b, 0, y, x);
  double nmean = ns / (4 * 784.0);
  for (int b = 0; b < 4; ++b)
    for (int y = 2; y < 30; ++y)
      for (int x = 2; x < 30; ++x) {
        double d = t(b, 0, y, x) - nmean;
        nq += d * d;
      }
  CHECK(std::abs(nmean) < 1e-6);
  CHECK(std::sqrt(nq / (4 * 784.0)) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("constant image at the mean normalizes to zero interior") {
  RawImages imgs;
  imgs.n = 2;
  imgs.c = 1;
  imgs.h = 28;
  imgs.w = 28;
  imgs.bytes.assign(2 * 784, 0);
  for (int j = 0; j < 784; ++j) imgs.bytes[size_t(j)] = 100;
  for (int j = 0; j < 784; ++j) imgs.bytes[size_t(784 + j)] = 100;

  PixelStats st;
  st.mu = {100.0};
  st.sigma = {50.0};
  Tensor t = preprocess(imgs, {0}, st);
  for (int y = 2; y < 30; ++y)
    for (int x = 2; x < 30; ++x) CHECK(t(0, 0, y, x) == 0.0f);
  // padded frame holds (0 - mu) / sigma
  CHECK(t(0, 0, 0, 0) == doctest::Approx(-2.0));
  CHECK(t(0, 0, 31, 31) == doctest::Approx(-2.0));
}

TEST_CASE("identity normalization casts bytes to floats") {
  RawImages imgs;
  imgs.n = 1;
  imgs.c = 3;
  imgs.h = 32;
  imgs.w = 32;
  imgs.bytes.resize(3072);
  for (size_t i = 0; i < 3072; ++i) imgs.bytes[i] = uint8_t(i % 251);
  PixelStats st;
  st.mu = {0.0};
  st.sigma = {1.0};
  Tensor t = preprocess(imgs, {0}, st);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        CHECK(t(0, c, y, x) == float(imgs.bytes[size_t((c * 32 + y) * 32 + x)]));
}

TEST_CASE("zero variance data is rejected") {
  RawImages imgs;
  imgs.n = 1;
  imgs.c = 1;
  imgs.h = 28;
  imgs.w = 28;
  imgs.bytes.assign(784, 77);
  CHECK_THROWS_AS(compute_stats(imgs, {0}, false), DataError);
}

TEST_CASE("per-channel statistics are independent per plane") {
  RawImages imgs;
  imgs.n = 1;
  imgs.c = 3;
  imgs.h = 32;
  imgs.w = 32;
  imgs.bytes.resize(3072);
  Rng rng(8, 1);
  for (size_t i = 0; i < 1024; ++i) imgs.bytes[i] = uint8_t(rng.uniform_int(100));
  for (size_t i = 1024; i < 2048; ++i)
    imgs.bytes[i] = uint8_t(100 + rng.uniform_int(100));
  for (size_t i = 2048; i < 3072; ++i) imgs.bytes[i] = uint8_t(rng.uniform_int(256));
  PixelStats st = compute_stats(imgs, {0}, true);
  REQUIRE(st.mu.size() == 3);
  CHECK(st.mu[0] < 100.0);
  CHECK(st.mu[1] >= 100.0);
  for (double sg : st.sigma) CHECK(sg > 0.0);
}

namespace {

// tiny labeled tensor set: n samples, 1x4x4, pixel value = sample index
Tensor tiny_x(int n) {
  Tensor x(n, 1, 4, 4);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 16; ++j) x.sample(i)[j] = float(i);
  return x;
}

}  // namespace

TEST_CASE("triple sampler: label equality and index inequality over 1000 draws") {
  const int n = 64;
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[size_t(i)] = i % 10;
  Tensor x = tiny_x(n);
  Rng rng(21, 4);
  TripleSampler sampler(x, y, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    BatchTriple t = sampler.next(8);
    REQUIRE(t.idx_i.size() == t.idx_k.size());
    for (size_t p = 0; p < t.idx_i.size(); ++p) {
      CHECK(y[t.idx_k[p]] == y[t.idx_i[p]]);
      CHECK(t.idx_k[p] != t.idx_i[p]);
      CHECK(t.bk.y[p] == t.bi.y[p]);
      // gathered pixels match the source rows
      CHECK(t.bi.x.sample(int(p))[0] == float(t.idx_i[p]));
      CHECK(t.bk.x.sample(int(p))[0] == float(t.idx_k[p]));
      CHECK(t.bj.x.sample(int(p))[0] == float(t.idx_j[p]));
    }
  }
}

TEST_CASE("epoch walk covers every sample exactly once") {
  const int n = 50;
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[size_t(i)] = i % 10;
  Tensor x = tiny_x(n);
  Rng rng(13, 0);
  TripleSampler sampler(x, y, rng);
  std::vector<int> seen(n, 0);
  int remaining = n;
  while (remaining > 0) {
    BatchTriple t = sampler.next(8);
    for (uint32_t i : t.idx_i) seen[i]++;
    remaining -= int(t.idx_i.size());
  }
  for (int i = 0; i < n; ++i) CHECK(seen[size_t(i)] == 1);
  CHECK(sampler.remaining() == 0);
  BatchTriple t2 = sampler.next(8);  // rolls into a fresh shuffled epoch
  CHECK(t2.idx_i.size() == 8);
  CHECK(sampler.remaining() == n - 8);
}

TEST_CASE("two-sample classes force batch_k to the complementary sample") {
  // classes 0 and 1, two samples each
  std::vector<int> y = {0, 0, 1, 1};
  Tensor x = tiny_x(4);
  Rng rng(2, 2);
  TripleSampler sampler(x, y, rng);
  for (int trial = 0; trial < 200; ++trial) {
    BatchTriple t = sampler.next(2);
    for (size_t p = 0; p < t.idx_i.size(); ++p) {
      uint32_t i = t.idx_i[p], k = t.idx_k[p];
      uint32_t expect = (i % 2 == 0) ? i + 1 : i - 1;
      CHECK(k == expect);
    }
  }
}

TEST_CASE("single-sample class raises a sampling error naming the class") {
  std::vector<int> y = {0, 0, 3};
  Tensor x = tiny_x(3);
  Rng rng(1, 1);
  TripleSampler sampler(x, y, rng);
  bool threw = false;
  for (int trial = 0; trial < 20 && !threw; ++trial) {
    try {
      sampler.next(3);
    } catch (const DataError& e) {
      threw = true;
      CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
  }
  CHECK(threw);
}

TEST_CASE("fixed seed replays identical triples") {
  const int n = 40;
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[size_t(i)] = i % 10;
  Tensor x = tiny_x(n);

  auto run = [&] {
    Rng rng(77, 5);
    TripleSampler sampler(x, y, rng);
    std::vector<uint32_t> trace;
    for (int s = 0; s < 30; ++s) {
      BatchTriple t = sampler.next(8);
      trace.insert(trace.end(), t.idx_i.begin(), t.idx_i.end());
      trace.insert(trace.end(), t.idx_j.begin(), t.idx_j.end());
      trace.insert(trace.end(), t.idx_k.begin(), t.idx_k.end());
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("sampler state round-trips through order/cursor") {
  const int n = 30;
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[size_t(i)] = i % 10;
  Tensor x = tiny_x(n);

  Rng rng(9, 9);
  TripleSampler sampler(x, y, rng);
  sampler.next(8);
  auto order = sampler.order();
  auto cursor = sampler.cursor();
  auto rng_state = rng.state();

  auto t1 = sampler.next(8);

  // restore order: construct (consumes rng), then put rng and walk state back
  Rng rng2(1, 1);
  TripleSampler s2(x, y, rng2);
  rng2.restore(rng_state);
  s2.restore(order, cursor);
  auto t2 = s2.next(8);
  CHECK(t1.idx_i == t2.idx_i);
  CHECK(t1.idx_j == t2.idx_j);
  CHECK(t1.idx_k == t2.idx_k);
}

TEST_CASE("prepare wires loading, subsetting, stats, and padding together") {
  auto root = fixture_dir() / "root";
  fs::create_directories(root / "mnist");
  Rng rng(31, 0);
  RawImages tr;
  tr.n = 40;
  tr.c = 1;
  tr.h = 28;
  tr.w = 28;
  tr.bytes.resize(40 * 784);
  for (auto& b : tr.bytes) b = uint8_t(rng.uniform_int(256));
  std::vector<uint8_t> try_(40);
  for (int i = 0; i < 40; ++i) try_[size_t(i)] = uint8_t(i % 10);
  RawImages te = tr;
  te.n = 10;
  te.bytes.resize(10 * 784);
  std::vector<uint8_t> tey(10);
  std::iota(tey.begin(), tey.end(), uint8_t(0));

  save_idx_images((root / "mnist" / "train-images-idx3-ubyte").string(), tr);
  save_idx_labels((root / "mnist" / "train-labels-idx1-ubyte").string(), try_);
  save_idx_images((root / "mnist" / "t10k-images-idx3-ubyte").string(), te);
  save_idx_labels((root / "mnist" / "t10k-labels-idx1-ubyte").string(), tey);

  DatasetSpec spec;
  spec.name = "mnist";
  spec.data_root = root.string();
  spec.subset_size = 20;
  spec.seed = 17;
  PreparedData d = prepare(spec);
  CHECK(d.train_x.b == 20);
  CHECK(d.train_x.c == 1);
  CHECK(d.train_x.h == 32);
  CHECK(d.train_x.w == 32);
  CHECK(d.test_x.b == 10);
  CHECK(d.train_y.size() == 20);
  CHECK(d.test_y.size() == 10);
  CHECK(d.img_ch == 1);
  std::vector<int> per_class(10, 0);
  for (int yy : d.train_y) per_class[size_t(yy)]++;
  for (int c = 0; c < 10; ++c) CHECK(per_class[size_t(c)] == 2);

  float padval = float((0.0 - d.stats.mu[0]) / d.stats.sigma[0]);
  CHECK(d.train_x(0, 0, 0, 0) == doctest::Approx(padval));
  CHECK(d.test_x(0, 0, 31, 0) == doctest::Approx(padval));
  CHECK(d.train_x.all_finite());

  DatasetSpec bad = spec;
  bad.name = "imagenet";
  CHECK_THROWS_AS(prepare(bad), ConfigError);
}

TEST_CASE("real mnist files load with canonical counts when present") {
  const char* env = std::getenv("ADVAUG_DATA_ROOT");
  std::string root = env ? env : "/root/data";
  auto dir = fs::path(root) / "mnist";
  if (!fs::exists(dir / "train-images-idx3-ubyte")) {
    MESSAGE("mnist files not found under ", root, "; skipping");
    return;
  }
  RawDataset tr = load_idx((dir / "train-images-idx3-ubyte").string(),
                           (dir / "train-labels-idx1-ubyte").string());
  RawDataset te = load_idx((dir / "t10k-images-idx3-ubyte").string(),
                           (dir / "t10k-labels-idx1-ubyte").string());
  CHECK(tr.images.n == 60000);
  CHECK(tr.labels.size() == 60000);
  CHECK(te.images.n == 10000);
  CHECK(tr.images.h == 28);
  CHECK(tr.images.w == 28);

  DatasetSpec spec;
  spec.name = "mnist";
  spec.data_root = root;
  spec.subset_size = 550;
  spec.seed = 1;
  PreparedData d = prepare(spec);
  CHECK(d.train_x.b == 550);
  CHECK(d.test_x.b == 10000);
  std::vector<int> per_class(10, 0);
  for (int yy : d.train_y) per_class[size_t(yy)]++;
  for (int c = 0; c < 10; ++c) CHECK(per_class[size_t(c)] == 55);
  // normalized subset mean over the original pixel region is ~0
  double s = 0;
  for (int b = 0; b < 550; ++b)
    for (int y = 2; y < 30; ++y)
      for (int x = 2; x < 30; ++x) s += d.train_x(b, 0, y, x);
  CHECK(std::abs(s / (550 * 784.0)) < 1e-5);
}
