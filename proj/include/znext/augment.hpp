#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "znext/image.hpp"
#include "znext/random.hpp"

namespace znext {

struct AugmentOptions {
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double brightness = 0.1;  // multiplicative jitter, +-fraction
  double contrast = 0.1;
};

/// One draw of augmentation parameters, applied identically to every frame
/// of a clip.
struct AugmentDraw {
  bool flip = false;
  double angle_rad = 0;
  double brightness = 1;
  double contrast = 1;
};

inline AugmentDraw draw_augment(Rng& rng, const AugmentOptions& opt = {}) {
  AugmentDraw d;
  d.flip = rng.bernoulli(opt.flip_prob);
  d.angle_rad = rng.uniform(-opt.max_rotation_deg, opt.max_rotation_deg) * std::numbers::pi / 180.0;
  d.brightness = rng.uniform(1 - opt.brightness, 1 + opt.brightness);
  d.contrast = rng.uniform(1 - opt.contrast, 1 + opt.contrast);
  return d;
}

namespace detail {

// Geometric part: flip then rotation about the center. Images are sampled
// bilinearly with edge clamping; masks use nearest neighbour and stay binary.
inline Image warp(const Image& src, const AugmentDraw& d, bool nearest) {
  const std::size_t H = src.height, W = src.width;
  Image out(src.channels, H, W);
  const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;
  const double c = std::cos(d.angle_rad), s = std::sin(d.angle_rad);
  auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, long(n) - 1)); };
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      double sy = c * dy + s * dx + cy;
      double sx = -s * dy + c * dx + cx;
      if (d.flip) sx = static_cast<double>(W) - 1 - sx;
      for (std::size_t ch = 0; ch < src.channels; ++ch) {
        if (nearest) {
          out.at(ch, y, x) = src.at(ch, clampi(std::lround(sy), H), clampi(std::lround(sx), W));
          continue;
        }
        const double fy = std::floor(sy), fx = std::floor(sx);
        const double ay = sy - fy, ax = sx - fx;
        const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
        const double v00 = src.at(ch, clampi(y0, H), clampi(x0, W));
        const double v01 = src.at(ch, clampi(y0, H), clampi(x0 + 1, W));
        const double v10 = src.at(ch, clampi(y0 + 1, H), clampi(x0, W));
        const double v11 = src.at(ch, clampi(y0 + 1, H), clampi(x0 + 1, W));
        out.at(ch, y, x) = (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
      }
    }
  return out;
}

}  // namespace detail

inline Image augment_image(const Image& img, const AugmentDraw& d) {
  Image out = detail::warp(img, d, false);
  double m = 0;
  for (double v : out.data) m += v * d.brightness;
  m /= static_cast<double>(out.data.size());
  for (auto& v : out.data) v = std::clamp((v * d.brightness - m) * d.contrast + m, 0.0, 1.0);
  return out;
}

inline Image augment_mask(const Image& mask, const AugmentDraw& d) { return detail::warp(mask, d, true); }

}  // namespace znext
