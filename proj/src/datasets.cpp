#include "advaug/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "advaug/errors.hpp"

namespace advaug {

namespace {

uint32_t read_u32_be(std::istream& in, const std::string& path) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(path + ": truncated header");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void write_u32_be(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<uint8_t> read_exact(std::istream& in, size_t n, const std::string& path) {
  std::vector<uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n));
  if (size_t(in.gcount()) != n) throw FormatError(path + ": truncated payload");
  in.peek();
  if (!in.eof()) throw FormatError(path + ": trailing bytes after payload");
  return buf;
}

std::ifstream open_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return f;
}

}  // namespace

RawImages load_idx_images(const std::string& path) {
  auto f = open_file(path);
  uint32_t magic = read_u32_be(f, path);
  RawImages out;
  if (magic == 2051) {  // 0x00000803: ubyte, 3 dims
    out.n = int(read_u32_be(f, path));
    out.h = int(read_u32_be(f, path));
    out.w = int(read_u32_be(f, path));
    out.c = 1;
  } else if (magic == 2052) {  // 0x00000804: ubyte, 4 dims (pre-converted color)
    out.n = int(read_u32_be(f, path));
    out.c = int(read_u32_be(f, path));
    out.h = int(read_u32_be(f, path));
    out.w = int(read_u32_be(f, path));
  } else {
    throw FormatError(path + ": bad image magic " + std::to_string(magic));
  }
  out.bytes = read_exact(f, size_t(out.n) * out.c * out.h * out.w, path);
  return out;
}

std::vector<uint8_t> load_idx_labels(const std::string& path) {
  auto f = open_file(path);
  uint32_t magic = read_u32_be(f, path);
  if (magic != 2049)  // 0x00000801: ubyte, 1 dim
    throw FormatError(path + ": bad label magic " + std::to_string(magic));
  uint32_t n = read_u32_be(f, path);
  return read_exact(f, n, path);
}

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  RawDataset ds;
  ds.images = load_idx_images(images_path);
  ds.labels = load_idx_labels(labels_path);
  if (size_t(ds.images.n) != ds.labels.size())
    throw FormatError("image/label count mismatch: " + std::to_string(ds.images.n) +
                      " vs " + std::to_string(ds.labels.size()));
  return ds;
}

void save_idx_images(const std::string& path, const RawImages& imgs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  if (imgs.c == 1) {
    write_u32_be(f, 2051);
    write_u32_be(f, uint32_t(imgs.n));
    write_u32_be(f, uint32_t(imgs.h));
    write_u32_be(f, uint32_t(imgs.w));
  } else {
    write_u32_be(f, 2052);
    write_u32_be(f, uint32_t(imgs.n));
    write_u32_be(f, uint32_t(imgs.c));
    write_u32_be(f, uint32_t(imgs.h));
    write_u32_be(f, uint32_t(imgs.w));
  }
  f.write(reinterpret_cast<const char*>(imgs.bytes.data()),
          std::streamsize(imgs.bytes.size()));
}

void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  write_u32_be(f, 2049);
  write_u32_be(f, uint32_t(labels.size()));
  f.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

RawDataset load_cifar10(const std::vector<std::string>& paths) {
  RawDataset ds;
  ds.images.c = 3;
  ds.images.h = 32;
  ds.images.w = 32;
  for (const auto& path : paths) {
    auto f = open_file(path);
    f.seekg(0, std::ios::end);
    auto len = size_t(f.tellg());
    f.seekg(0);
    if (len % 3073 != 0)
      throw FormatError(path + ": size " + std::to_string(len) +
                        " is not a multiple of 3073");
    size_t n = len / 3073;
    std::vector<uint8_t> buf(len);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(len));
    if (size_t(f.gcount()) != len) throw FormatError(path + ": short read");
    for (size_t i = 0; i < n; ++i) {
      uint8_t label = buf[i * 3073];
      if (label > 9)
        throw DataError(path + ": label byte " + std::to_string(label) +
                        " out of range at record " + std::to_string(i));
      ds.labels.push_back(label);
      ds.images.bytes.insert(ds.images.bytes.end(), buf.begin() + long(i * 3073) + 1,
                             buf.begin() + long((i + 1) * 3073));
    }
    ds.images.n += int(n);
  }
  return ds;
}

void save_cifar10(const std::string& path, const RawDataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  for (int i = 0; i < ds.images.n; ++i) {
    f.put(char(ds.labels[size_t(i)]));
    f.write(reinterpret_cast<const char*>(ds.images.sample(i)), ds.images.dim());
  }
}

std::vector<uint8_t> idx_record(const RawImages& imgs, int i) {
  return {imgs.sample(i), imgs.sample(i) + imgs.dim()};
}

std::vector<uint8_t> cifar_record(const RawDataset& ds, int i) {
  std::vector<uint8_t> rec;
  rec.push_back(ds.labels[size_t(i)]);
  rec.insert(rec.end(), ds.images.sample(i), ds.images.sample(i) + ds.images.dim());
  return rec;
}

SubsetSplit make_subset(const DatasetSpec& spec, const std::vector<uint8_t>& labels) {
  const int n_class = 10;
  size_t total = labels.size();
  size_t want = spec.subset_size == 0 ? total : spec.subset_size;
  if (want > total)
    throw ConfigError("subset_size " + std::to_string(want) + " exceeds dataset size " +
                      std::to_string(total));
  if (want < n_class)
    throw ConfigError("subset_size " + std::to_string(want) +
                      " is smaller than the class count");

  std::vector<std::vector<uint32_t>> by_class(n_class);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) throw DataError("label out of range");
    by_class[labels[i]].push_back(uint32_t(i));
  }

  // per-class seeded shuffles; remainder distributed over a seeded class order
  size_t base = want / n_class, rem = want % n_class;
  std::vector<int> class_order(n_class);
  for (int c = 0; c < n_class; ++c) class_order[c] = c;
  Rng order_rng(spec.seed, 999);
  order_rng.shuffle(class_order);

  std::vector<size_t> take(n_class, base);
  for (size_t r = 0; r < rem; ++r) take[size_t(class_order[r])]++;

  SubsetSplit out;
  for (int c = 0; c < n_class; ++c) {
    if (take[size_t(c)] > by_class[size_t(c)].size())
      throw ConfigError("class " + std::to_string(c) + " has only " +
                        std::to_string(by_class[size_t(c)].size()) + " samples, need " +
                        std::to_string(take[size_t(c)]));
    Rng class_rng(spec.seed, 1000 + uint64_t(c));
    class_rng.shuffle(by_class[size_t(c)]);
    size_t n_take = take[size_t(c)];
    size_t n_val = spec.val_fraction > 0
                       ? size_t(std::floor(spec.val_fraction * double(n_take)))
                       : 0;
    if (spec.val_fraction > 0 && n_val == 0)
      throw ConfigError("val_fraction " + std::to_string(spec.val_fraction) +
                        " yields no validation sample for class " + std::to_string(c));
    for (size_t i = 0; i < n_take; ++i)
      (i < n_val ? out.val_idx : out.train_idx).push_back(by_class[size_t(c)][i]);
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  return out;
}

PixelStats compute_stats(const RawImages& imgs, const std::vector<uint32_t>& idx,
                         bool per_channel) {
  PixelStats st;
  int groups = per_channel ? imgs.c : 1;
  st.mu.assign(size_t(groups), 0.0);
  st.sigma.assign(size_t(groups), 0.0);
  size_t plane = size_t(imgs.h) * imgs.w;
  size_t count = idx.size() * plane * (per_channel ? 1 : size_t(imgs.c));
  if (count == 0) throw DataError("empty subset for statistics");
  for (int g = 0; g < groups; ++g) {
    double s = 0;
    for (uint32_t i : idx) {
      const uint8_t* p = imgs.sample(int(i));
      size_t lo = per_channel ? size_t(g) * plane : 0;
      size_t hi = per_channel ? lo + plane : size_t(imgs.dim());
      for (size_t j = lo; j < hi; ++j) s += p[j];
    }
    double mu = s / double(count);
    double q = 0;
    for (uint32_t i : idx) {
      const uint8_t* p = imgs.sample(int(i));
      size_t lo = per_channel ? size_t(g) * plane : 0;
      size_t hi = per_channel ? lo + plane : size_t(imgs.dim());
      for (size_t j = lo; j < hi; ++j) {
        double d = double(p[j]) - mu;
        q += d * d;
      }
    }
    double sigma = std::sqrt(q / double(count));
    if (sigma == 0) throw DataError("degenerate data: zero pixel variance");
    st.mu[size_t(g)] = mu;
    st.sigma[size_t(g)] = sigma;
  }
  return st;
}

Tensor preprocess(const RawImages& imgs, const std::vector<uint32_t>& idx,
                  const PixelStats& stats) {
  require(imgs.h == imgs.w && (imgs.h == 28 || imgs.h == 32),
          "expected 28x28 or 32x32 images");
  int pad = (32 - imgs.h) / 2;
  Tensor out(int(idx.size()), imgs.c, 32, 32);
  bool per_channel = stats.mu.size() > 1;
  for (size_t row = 0; row < idx.size(); ++row) {
    const uint8_t* p = imgs.sample(int(idx[row]));
    for (int c = 0; c < imgs.c; ++c) {
      float mu = float(stats.mu[per_channel ? size_t(c) : 0]);
      float inv = 1.0f / float(stats.sigma[per_channel ? size_t(c) : 0]);
      float padval = (0.0f - mu) * inv;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          int sy = y - pad, sx = x - pad;
          float raw = (sy >= 0 && sy < imgs.h && sx >= 0 && sx < imgs.w)
                          ? float(p[(size_t(c) * imgs.h + sy) * imgs.w + sx])
                          : -1.0f;
          out(int(row), c, y, x) =
              raw < 0 ? padval : (raw - mu) * inv;
        }
    }
  }
  return out;
}

PreparedData prepare(const DatasetSpec& spec) {
  std::string root = spec.data_root.empty() ? "data" : spec.data_root;
  RawDataset train, test;
  if (spec.name == "cifar10") {
    std::vector<std::string> tr, te;
    for (int i = 1; i <= 5; ++i)
      tr.push_back(root + "/cifar10/data_batch_" + std::to_string(i) + ".bin");
    te.push_back(root + "/cifar10/test_batch.bin");
    train = load_cifar10(tr);
    test = load_cifar10(te);
  } else if (spec.name == "mnist" || spec.name == "fmnist" ||
             spec.name == "svhn-converted") {
    std::string d = root + "/" + spec.name;
    train = load_idx(d + "/train-images-idx3-ubyte", d + "/train-labels-idx1-ubyte");
    test = load_idx(d + "/t10k-images-idx3-ubyte", d + "/t10k-labels-idx1-ubyte");
  } else {
    throw ConfigError("unknown dataset " + spec.name);
  }

  SubsetSplit split = make_subset(spec, train.labels);
  PreparedData out;
  out.stats = compute_stats(train.images, split.train_idx, spec.per_channel_norm);
  out.train_x = preprocess(train.images, split.train_idx, out.stats);
  out.val_x = preprocess(train.images, split.val_idx, out.stats);
  for (uint32_t i : split.train_idx) out.train_y.push_back(train.labels[i]);
  for (uint32_t i : split.val_idx) out.val_y.push_back(train.labels[i]);
  std::vector<uint32_t> all_test(test.labels.size());
  for (size_t i = 0; i < all_test.size(); ++i) all_test[i] = uint32_t(i);
  out.test_x = preprocess(test.images, all_test, out.stats);
  out.test_y.assign(test.labels.begin(), test.labels.end());
  out.subset_train_idx = std::move(split.train_idx);
  out.subset_val_idx = std::move(split.val_idx);
  out.img_ch = train.images.c;
  return out;
}

LabeledBatch gather(const Tensor& x, const std::vector<int>& y,
                    const std::vector<uint32_t>& idx) {
  LabeledBatch b;
  b.x = Tensor(int(idx.size()), x.c, x.h, x.w);
  for (size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(b.x.sample(int(i)), x.sample(int(idx[i])), sizeof(float) * x.dim());
    b.y.push_back(y[idx[i]]);
  }
  return b;
}

TripleSampler::TripleSampler(const Tensor& x, const std::vector<int>& y, Rng& rng)
    : x_(x), y_(y), rng_(rng), by_class_(10), pos_in_class_(y.size()) {
  for (size_t i = 0; i < y.size(); ++i) {
    pos_in_class_[i] = uint32_t(by_class_[size_t(y[i])].size());
    by_class_[size_t(y[i])].push_back(uint32_t(i));
  }
  start_epoch();
}

void TripleSampler::start_epoch() {
  order_.resize(y_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = uint32_t(i);
  rng_.shuffle(order_);
  cursor_ = 0;
}

void TripleSampler::restore(std::vector<uint32_t> order, size_t cursor) {
  order_ = std::move(order);
  cursor_ = cursor;
}

BatchTriple TripleSampler::next(int m) {
  if (cursor_ >= order_.size()) start_epoch();
  size_t take = std::min(size_t(m), order_.size() - cursor_);
  BatchTriple t;
  for (size_t p = 0; p < take; ++p) t.idx_i.push_back(order_[cursor_ + p]);
  cursor_ += take;
  for (size_t p = 0; p < take; ++p)
    t.idx_j.push_back(uint32_t(rng_.uniform_int(y_.size())));
  for (size_t p = 0; p < take; ++p) {
    uint32_t i = t.idx_i[p];
    const auto& cls = by_class_[size_t(y_[i])];
    if (cls.size() < 2)
      throw DataError("class " + std::to_string(y_[i]) +
                      " has a single sample; cannot draw a distinct pair");
    uint64_t r = rng_.uniform_int(cls.size() - 1);
    if (r >= pos_in_class_[i]) ++r;
    t.idx_k.push_back(cls[size_t(r)]);
  }
  t.bi = gather(x_, y_, t.idx_i);
  t.bj = gather(x_, y_, t.idx_j);
  t.bk = gather(x_, y_, t.idx_k);
  return t;
}

}  // namespace advaug
