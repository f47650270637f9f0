#pragma once
#include <cmath>

#include "advaug/tensor.hpp"

namespace advaug {

// Affine resampling in normalized coordinates. theta is a per-sample 6-vector
// (a11,a12,t1,a21,a22,t2) mapping OUTPUT pixel coordinates to INPUT ("source")
// coordinates, both in [-1,1]^2 with corner alignment: pixel i of an N-long
// axis sits at -1 + 2i/(N-1). Identity theta therefore reproduces the input
// exactly. Source taps outside the image read as zero.

template <class T>
TensorT<T> identity_theta(int B) {
  TensorT<T> th = TensorT<T>::vec(B, 6);
  for (int b = 0; b < B; ++b) {
    th.v[size_t(b) * 6 + 0] = T(1);
    th.v[size_t(b) * 6 + 4] = T(1);
  }
  return th;
}

template <class T>
inline T norm_coord(int i, int n) {
  return n > 1 ? T(-1) + T(2) * T(i) / T(n - 1) : T(0);
}

// grid layout: (B, 2, H, W); channel 0 = source x, channel 1 = source y
template <class T>
TensorT<T> affine_grid(const TensorT<T>& theta, int H, int W) {
  require(theta.dim() == 6, "affine_grid: theta must be (B,6)");
  TensorT<T> grid(theta.b, 2, H, W);
  for (int b = 0; b < theta.b; ++b) {
    const T* t = theta.sample(b);
    for (int iy = 0; iy < H; ++iy) {
      T yn = norm_coord<T>(iy, H);
      for (int ix = 0; ix < W; ++ix) {
        T xn = norm_coord<T>(ix, W);
        grid(b, 0, iy, ix) = t[0] * xn + t[1] * yn + t[2];
        grid(b, 1, iy, ix) = t[3] * xn + t[4] * yn + t[5];
      }
    }
  }
  return grid;
}

// d(loss)/d(theta) from d(loss)/d(grid); the map is linear in theta
template <class T>
TensorT<T> affine_grid_backward(const TensorT<T>& dgrid) {
  int H = dgrid.h, W = dgrid.w;
  TensorT<T> dtheta = TensorT<T>::vec(dgrid.b, 6);
  for (int b = 0; b < dgrid.b; ++b) {
    T* dt = dtheta.sample(b);
    for (int iy = 0; iy < H; ++iy) {
      T yn = norm_coord<T>(iy, H);
      for (int ix = 0; ix < W; ++ix) {
        T xn = norm_coord<T>(ix, W);
        T gx = dgrid(b, 0, iy, ix), gy = dgrid(b, 1, iy, ix);
        dt[0] += gx * xn;
        dt[1] += gx * yn;
        dt[2] += gx;
        dt[3] += gy * xn;
        dt[4] += gy * yn;
        dt[5] += gy;
      }
    }
  }
  return dtheta;
}

template <class T>
TensorT<T> bilinear_sample(const TensorT<T>& img, const TensorT<T>& grid) {
  require(grid.b == img.b && grid.c == 2, "bilinear_sample: grid/image mismatch");
  int H = img.h, W = img.w, OH = grid.h, OW = grid.w;
  TensorT<T> out(img.b, img.c, OH, OW);
  for (int b = 0; b < img.b; ++b) {
    for (int iy = 0; iy < OH; ++iy)
      for (int ix = 0; ix < OW; ++ix) {
        T px = (grid(b, 0, iy, ix) + T(1)) * T(0.5) * T(W - 1);
        T py = (grid(b, 1, iy, ix) + T(1)) * T(0.5) * T(H - 1);
        int x0 = int(std::floor(px)), y0 = int(std::floor(py));
        T wx = px - T(x0), wy = py - T(y0);
        for (int ch = 0; ch < img.c; ++ch) {
          auto tap = [&](int yy, int xx) -> T {
            return (xx >= 0 && xx < W && yy >= 0 && yy < H) ? img(b, ch, yy, xx)
                                                            : T(0);
          };
          out(b, ch, iy, ix) =
              (T(1) - wy) * ((T(1) - wx) * tap(y0, x0) + wx * tap(y0, x0 + 1)) +
              wy * ((T(1) - wx) * tap(y0 + 1, x0) + wx * tap(y0 + 1, x0 + 1));
        }
      }
  }
  return out;
}

template <class T>
void bilinear_sample_backward(const TensorT<T>& img, const TensorT<T>& grid,
                              const TensorT<T>& dout, TensorT<T>& dimg,
                              TensorT<T>& dgrid) {
  int H = img.h, W = img.w, OH = grid.h, OW = grid.w;
  dimg = TensorT<T>(img.b, img.c, H, W);
  dgrid = TensorT<T>(grid.b, 2, OH, OW);
  for (int b = 0; b < img.b; ++b) {
    for (int iy = 0; iy < OH; ++iy)
      for (int ix = 0; ix < OW; ++ix) {
        T px = (grid(b, 0, iy, ix) + T(1)) * T(0.5) * T(W - 1);
        T py = (grid(b, 1, iy, ix) + T(1)) * T(0.5) * T(H - 1);
        int x0 = int(std::floor(px)), y0 = int(std::floor(py));
        T wx = px - T(x0), wy = py - T(y0);
        T gx = 0, gy = 0;
        for (int ch = 0; ch < img.c; ++ch) {
          T g = dout(b, ch, iy, ix);
          if (g == T(0)) continue;
          auto in = [&](int yy, int xx) {
            return xx >= 0 && xx < W && yy >= 0 && yy < H;
          };
          T v00 = in(y0, x0) ? img(b, ch, y0, x0) : T(0);
          T v01 = in(y0, x0 + 1) ? img(b, ch, y0, x0 + 1) : T(0);
          T v10 = in(y0 + 1, x0) ? img(b, ch, y0 + 1, x0) : T(0);
          T v11 = in(y0 + 1, x0 + 1) ? img(b, ch, y0 + 1, x0 + 1) : T(0);
          if (in(y0, x0)) dimg(b, ch, y0, x0) += g * (T(1) - wy) * (T(1) - wx);
          if (in(y0, x0 + 1)) dimg(b, ch, y0, x0 + 1) += g * (T(1) - wy) * wx;
          if (in(y0 + 1, x0)) dimg(b, ch, y0 + 1, x0) += g * wy * (T(1) - wx);
          if (in(y0 + 1, x0 + 1)) dimg(b, ch, y0 + 1, x0 + 1) += g * wy * wx;
          gx += g * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
          gy += g * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
        }
        dgrid(b, 0, iy, ix) = gx * T(0.5) * T(W - 1);
        dgrid(b, 1, iy, ix) = gy * T(0.5) * T(H - 1);
      }
  }
}

// convenience pair used by the generator and by strong augmentation
template <class T>
TensorT<T> stn_forward(const TensorT<T>& img, const TensorT<T>& theta) {
  return bilinear_sample(img, affine_grid(theta, img.h, img.w));
}

template <class T>
void stn_backward(const TensorT<T>& img, const TensorT<T>& theta,
                  const TensorT<T>& dout, TensorT<T>& dimg, TensorT<T>& dtheta) {
  TensorT<T> grid = affine_grid(theta, img.h, img.w);
  TensorT<T> dgrid;
  bilinear_sample_backward(img, grid, dout, dimg, dgrid);
  dtheta = affine_grid_backward(dgrid);
}

}  // namespace advaug
