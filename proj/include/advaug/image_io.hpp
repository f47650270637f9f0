#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advaug/datasets.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

// 8-bit raster, row-major with interleaved channels; ch is 1 or 3
struct ImageU8 {
  int h = 0, w = 0, ch = 1;
  std::vector<uint8_t> px;

  ImageU8() = default;
  ImageU8(int h_, int w_, int ch_)
      : h(h_), w(w_), ch(ch_), px(size_t(h_) * size_t(w_) * size_t(ch_), 0) {}
  uint8_t& at(int y, int x, int c) {
    return px[(size_t(y) * size_t(w) + size_t(x)) * size_t(ch) + size_t(c)];
  }
  uint8_t at(int y, int x, int c) const {
    return px[(size_t(y) * size_t(w) + size_t(x)) * size_t(ch) + size_t(c)];
  }
};

// binary PGM (P5) for one channel, PPM (P6) for three; lossless
void write_pnm(const std::string& path, const ImageU8& img);

// invert (p - mu) / sigma for one sample and clamp to [0, 255]
ImageU8 denormalize(const Tensor& x, int index, const PixelStats& stats);

// rows x cols tiles in batch order, `pad` blank pixels between tiles and no
// outer border, so each side is tiles*32 + (tiles-1)*pad
ImageU8 tile_grid(const Tensor& batch, const PixelStats& stats, int rows,
                  int cols, int pad = 2);

// side by side with a `pad` gutter
ImageU8 hstack(const ImageU8& a, const ImageU8& b, int pad = 2);

}  // namespace advaug
