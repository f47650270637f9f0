#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "advaug/rng.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

// raw byte images, (n, c, h, w), one byte per pixel, channel-planar
struct RawImages {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<uint8_t> bytes;
  const uint8_t* sample(int i) const { return bytes.data() + size_t(i) * c * h * w; }
  int dim() const { return c * h * w; }
};

struct RawDataset {
  RawImages images;
  std::vector<uint8_t> labels;
};

// IDX: big-endian magic (0x00000803 images / 0x00000801 labels), big-endian
// dimension fields, then the payload bytes. 4-dim image files (magic
// 0x00000804, dims n,c,h,w) are accepted for pre-converted color data.
RawImages load_idx_images(const std::string& path);
std::vector<uint8_t> load_idx_labels(const std::string& path);
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx_images(const std::string& path, const RawImages& imgs);
void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// CIFAR-10 binary: records of 3073 bytes, 1 label byte + 3072 pixel bytes in
// channel-planar R,G,B row-major order.
RawDataset load_cifar10(const std::vector<std::string>& paths);
void save_cifar10(const std::string& path, const RawDataset& ds);

// re-serialize one sample into its on-disk record layout (round-trip checks)
std::vector<uint8_t> idx_record(const RawImages& imgs, int i);
std::vector<uint8_t> cifar_record(const RawDataset& ds, int i);

struct DatasetSpec {
  std::string name = "mnist";  // mnist | fmnist | cifar10 | svhn-converted
  std::string data_root;       // directory holding <name>/<files>
  size_t subset_size = 0;      // 0 = full training set
  double val_fraction = 0.0;
  uint64_t seed = 1;
  bool per_channel_norm = false;
};

// balanced subset selection: per-class counts within +-1, deterministic in
// (spec, seed); val carved out of the subset per class at val_fraction
struct SubsetSplit {
  std::vector<uint32_t> train_idx, val_idx;
};
SubsetSplit make_subset(const DatasetSpec& spec, const std::vector<uint8_t>& labels);

// scalar (or per-channel) statistics over the original pixel region of the
// given samples, two-pass
struct PixelStats {
  std::vector<double> mu, sigma;  // size 1 (scalar) or c (per-channel)
};
PixelStats compute_stats(const RawImages& imgs, const std::vector<uint32_t>& idx,
                         bool per_channel);

// zero-pad grayscale 28x28 to 32x32 (raw bytes, before normalization), then
// map every pixel through (p - mu) / sigma
Tensor preprocess(const RawImages& imgs, const std::vector<uint32_t>& idx,
                  const PixelStats& stats);

struct LabeledBatch {
  Tensor x;
  std::vector<int> y;
};

struct BatchTriple {
  LabeledBatch bi, bj, bk;                   // transformed / real / same-label
  std::vector<uint32_t> idx_i, idx_j, idx_k; // source rows, for audits
};

// normalized, ready-to-train split
struct PreparedData {
  Tensor train_x, val_x, test_x;
  std::vector<int> train_y, val_y, test_y;
  PixelStats stats;
  std::vector<uint32_t> subset_train_idx, subset_val_idx;
  int img_ch = 1;
};
PreparedData prepare(const DatasetSpec& spec);

// Alg-style batch maker. batch_i walks a reshuffled epoch permutation;
// batch_j is drawn with replacement; batch_k matches batch_i's labels
// positionwise with a different sample index. Single-owner: one rng, one user.
class TripleSampler {
 public:
  TripleSampler(const Tensor& x, const std::vector<int>& y, Rng& rng);

  BatchTriple next(int m);     // m capped by what remains in the epoch
  int remaining() const { return int(order_.size() - cursor_); }
  void start_epoch();

  // checkpoint plumbing
  std::vector<uint32_t> order() const { return order_; }
  size_t cursor() const { return cursor_; }
  void restore(std::vector<uint32_t> order, size_t cursor);

 private:
  const Tensor& x_;
  const std::vector<int>& y_;
  Rng& rng_;
  std::vector<std::vector<uint32_t>> by_class_;
  std::vector<uint32_t> pos_in_class_;
  std::vector<uint32_t> order_;
  size_t cursor_ = 0;
};

LabeledBatch gather(const Tensor& x, const std::vector<int>& y,
                    const std::vector<uint32_t>& idx);

}  // namespace advaug
