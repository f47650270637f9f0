#include "advaug/image_io.hpp"

#include <cmath>
#include <fstream>

#include "advaug/errors.hpp"

namespace advaug {

void write_pnm(const std::string& path, const ImageU8& img) {
  require(img.ch == 1 || img.ch == 3, "pnm wants 1 or 3 channels");
  require(img.h > 0 && img.w > 0, "empty image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write " + path);
  os << (img.ch == 1 ? "P5" : "P6") << "\n"
     << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.px.data()),
           std::streamsize(img.px.size()));
  if (!os) throw FileError("write failed for " + path);
}

ImageU8 denormalize(const Tensor& x, int index, const PixelStats& stats) {
  require(index >= 0 && index < x.b, "sample index out of range");
  require(x.c == 1 || x.c == 3, "expected 1 or 3 channels");
  require(stats.mu.size() == 1 || int(stats.mu.size()) == x.c,
          "stats are scalar or per-channel");
  ImageU8 img(x.h, x.w, x.c);
  for (int c = 0; c < x.c; ++c) {
    size_t sc = stats.mu.size() == 1 ? 0 : size_t(c);
    double mu = stats.mu[sc], sigma = stats.sigma[sc];
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        double p = std::round(double(x(index, c, y, xx)) * sigma + mu);
        img.at(y, xx, c) = uint8_t(std::min(255.0, std::max(0.0, p)));
      }
  }
  return img;
}

ImageU8 tile_grid(const Tensor& batch, const PixelStats& stats, int rows,
                  int cols, int pad) {
  require(rows > 0 && cols > 0 && pad >= 0, "bad grid layout");
  require(batch.b >= rows * cols, "grid needs " + std::to_string(rows * cols) +
                                      " samples, batch has " +
                                      std::to_string(batch.b));
  ImageU8 grid(rows * batch.h + (rows - 1) * pad,
               cols * batch.w + (cols - 1) * pad, batch.c);
  for (int r = 0; r < rows; ++r)
    for (int cc = 0; cc < cols; ++cc) {
      ImageU8 tile = denormalize(batch, r * cols + cc, stats);
      int oy = r * (batch.h + pad), ox = cc * (batch.w + pad);
      for (int y = 0; y < tile.h; ++y)
        for (int x = 0; x < tile.w; ++x)
          for (int c = 0; c < tile.ch; ++c)
            grid.at(oy + y, ox + x, c) = tile.at(y, x, c);
    }
  return grid;
}

ImageU8 hstack(const ImageU8& a, const ImageU8& b, int pad) {
  require(a.h == b.h && a.ch == b.ch, "hstack wants equal heights and channels");
  ImageU8 out(a.h, a.w + pad + b.w, a.ch);
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x)
      for (int c = 0; c < a.ch; ++c) out.at(y, x, c) = a.at(y, x, c);
    for (int x = 0; x < b.w; ++x)
      for (int c = 0; c < b.ch; ++c)
        out.at(y, a.w + pad + x, c) = b.at(y, x, c);
  }
  return out;
}

}  // namespace advaug
