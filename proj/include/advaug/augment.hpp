#pragma once
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "advaug/errors.hpp"
#include "advaug/rng.hpp"
#include "advaug/stn.hpp"
#include "advaug/tensor.hpp"

namespace advaug {

enum class DaKind { none, light, strong };

struct AugmentPolicy {
  DaKind kind = DaKind::none;
  bool flip_enabled = false;  // horizontal flip, color strong policy only
  double rot_deg = 10.0;      // theta ~ U[-rot_deg, rot_deg]
  double scale_lo = 0.5, scale_hi = 2.0;
  int pad = 4;
};

// zero-pad by `pad` on every side, crop the window at (oy, ox) per sample;
// offsets live in {0 .. 2*pad}, (pad, pad) is the identity
inline Tensor pad_crop(const Tensor& x, const std::vector<std::pair<int, int>>& offsets,
                       int pad = 4) {
  require(int(offsets.size()) == x.b, "pad_crop: one offset per sample");
  Tensor out(x.b, x.c, x.h, x.w);
  for (int b = 0; b < x.b; ++b) {
    auto [oy, ox] = offsets[size_t(b)];
    require(oy >= 0 && oy <= 2 * pad && ox >= 0 && ox <= 2 * pad,
            "pad_crop: offset outside the padded window");
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y) {
        int sy = y + oy - pad;
        if (sy < 0 || sy >= x.h) continue;  // rows default to zero
        for (int xx = 0; xx < x.w; ++xx) {
          int sx = xx + ox - pad;
          if (sx >= 0 && sx < x.w) out(b, c, y, xx) = x(b, c, sy, sx);
        }
      }
  }
  return out;
}

inline std::vector<std::pair<int, int>> draw_crop_offsets(int b, Rng& rng, int pad = 4) {
  std::vector<std::pair<int, int>> off;
  off.reserve(size_t(b));
  for (int i = 0; i < b; ++i) {
    int oy = int(rng.uniform_int(uint64_t(2 * pad + 1)));
    int ox = int(rng.uniform_int(uint64_t(2 * pad + 1)));
    off.emplace_back(oy, ox);
  }
  return off;
}

inline Tensor light_da(const Tensor& x, Rng& rng, int pad = 4) {
  return pad_crop(x, draw_crop_offsets(x.b, rng, pad), pad);
}

// horizontal mirror for the flagged samples; pure index reversal, bit-exact
inline Tensor flip_h(const Tensor& x, const std::vector<uint8_t>& do_flip) {
  require(int(do_flip.size()) == x.b, "flip_h: one flag per sample");
  Tensor out = x;
  for (int b = 0; b < x.b; ++b) {
    if (!do_flip[size_t(b)]) continue;
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) out(b, c, y, xx) = x(b, c, y, x.w - 1 - xx);
  }
  return out;
}

// rotation + isotropic scale about the image center, run through the shared
// bilinear sampler; theta encodes the output-to-input map R(-deg)/scale
inline Tensor rot_scale(const Tensor& x, const std::vector<double>& deg,
                        const std::vector<double>& scale) {
  require(int(deg.size()) == x.b && int(scale.size()) == x.b,
          "rot_scale: one (deg, scale) pair per sample");
  Tensor theta = identity_theta<float>(x.b);
  for (int b = 0; b < x.b; ++b) {
    double a = deg[size_t(b)] * M_PI / 180.0;
    double inv = 1.0 / scale[size_t(b)];
    float* t = theta.sample(b);
    t[0] = float(std::cos(a) * inv);
    t[1] = float(-std::sin(a) * inv);
    t[2] = 0.0f;
    t[3] = float(std::sin(a) * inv);
    t[4] = float(std::cos(a) * inv);
    t[5] = 0.0f;
  }
  return stn_forward(x, theta);
}

// light crop, then per-sample rotation/scale, then coin-flip mirror when the
// policy allows it; rng order: offsets, then (deg, scale) pairs, then flips
inline Tensor strong_da(const Tensor& x, const AugmentPolicy& policy, Rng& rng) {
  Tensor out = light_da(x, rng, policy.pad);
  std::vector<double> deg(size_t(x.b)), sc(size_t(x.b));
  for (int b = 0; b < x.b; ++b) {
    deg[size_t(b)] = rng.uniform(-policy.rot_deg, policy.rot_deg);
    sc[size_t(b)] = rng.uniform(policy.scale_lo, policy.scale_hi);
  }
  out = rot_scale(out, deg, sc);
  if (policy.flip_enabled) {
    std::vector<uint8_t> flips(size_t(x.b));
    for (int b = 0; b < x.b; ++b) flips[size_t(b)] = rng.uniform() < 0.5 ? 1 : 0;
    out = flip_h(out, flips);
  }
  return out;
}

inline Tensor augment(const Tensor& x, const AugmentPolicy& policy, Rng& rng) {
  switch (policy.kind) {
    case DaKind::none:
      return x;
    case DaKind::light:
      return light_da(x, rng, policy.pad);
    case DaKind::strong:
      return strong_da(x, policy, rng);
  }
  throw ConfigError("augment: unknown policy kind");
}

inline DaKind parse_da_kind(const std::string& s) {
  if (s == "none") return DaKind::none;
  if (s == "light") return DaKind::light;
  if (s == "strong") return DaKind::strong;
  throw ConfigError("unknown augmentation policy '" + s + "'");
}

inline const char* da_kind_name(DaKind k) {
  switch (k) {
    case DaKind::none: return "none";
    case DaKind::light: return "light";
    case DaKind::strong: return "strong";
  }
  return "?";
}

}  // namespace advaug
