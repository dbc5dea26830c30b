#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "znext/dataset.hpp"
#include "znext/random.hpp"

namespace znext {

/// Synthetic camouflage generator settings.
struct SyntheticSpec {
  std::size_t count = 16;
  std::size_t side = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double contrast = 0.15;  // object/background mean gap
  std::size_t clip_len = 1;
  double drift = 4.0;      // max object displacement per frame, pixels
  double texture = 0.12;   // texture amplitude
  std::uint64_t seed = 1;

  void validate() const {
    if (count == 0) throw DataError("synth: count must be positive");
    if (side < 16 || side % 4 != 0) throw DataError("synth: side must be >= 16 and divisible by 4");
    if (min_objects < 1 || max_objects < min_objects || max_objects > 3)
      throw DataError("synth: object count range must lie within 1..3");
    if (!(contrast > 0 && contrast <= 0.5)) throw DataError("synth: contrast must lie in (0, 0.5]");
    if (clip_len < 1) throw DataError("synth: clip length must be >= 1");
    if (!(drift >= 0 && drift <= 4)) throw DataError("synth: drift must lie in [0, 4]");
  }
};

namespace detail {

// Zero-mean noise field smoothed by two 5x5 box passes (toroidal), scaled to
// unit standard deviation.
inline std::vector<double> smooth_noise(std::size_t H, std::size_t W, Rng& rng) {
  std::vector<double> a(H * W), b(H * W);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double s = 0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx)
            s += a[((y + H + dy) % H) * W + (x + W + dx) % W];
        b[y * W + x] = s / 25.0;
      }
    std::swap(a, b);
  }
  double m = 0, ss = 0;
  for (double v : a) m += v;
  m /= static_cast<double>(a.size());
  for (double v : a) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(a.size()));
  for (auto& v : a) v = (v - m) / sd;
  return a;
}

struct Ellipse {
  double cy, cx, ry, rx, theta;

  bool contains(double y, double x) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (x - cx) * c + (y - cy) * s, v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  }
};

}  // namespace detail

/// Generates `count` samples. Background and object share one texture model;
/// the object differs only by a mean shift of `contrast`. In clip mode each
/// object follows a seeded random walk of at most `drift` pixels per frame.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t S = spec.side;
  const double lo_r = static_cast<double>(S) / 8, hi_r = static_cast<double>(S) / 4;
  const double bg_mean = 0.5 - spec.contrast / 2, fg_mean = 0.5 + spec.contrast / 2;
  Dataset ds;
  for (std::size_t n = 0; n < spec.count; ++n) {
    const std::size_t k = spec.min_objects + rng.index(spec.max_objects - spec.min_objects + 1);
    std::vector<detail::Ellipse> objs;
    for (std::size_t i = 0; i < k; ++i) {
      detail::Ellipse e{};
      e.ry = rng.uniform(lo_r, hi_r);
      e.rx = rng.uniform(lo_r, hi_r);
      const double m = std::max(e.ry, e.rx);
      e.cy = rng.uniform(m, static_cast<double>(S) - m);
      e.cx = rng.uniform(m, static_cast<double>(S) - m);
      e.theta = rng.uniform(0.0, std::numbers::pi);
      objs.push_back(e);
    }
    std::array<std::vector<double>, 3> bg_tex, fg_tex;
    for (std::size_t c = 0; c < 3; ++c) {
      bg_tex[c] = detail::smooth_noise(S, S, rng);
      fg_tex[c] = detail::smooth_noise(S, S, rng);
    }
    const double tint[3] = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};

    Sample s;
    char buf[64];
    if (spec.clip_len == 1)
      std::snprintf(buf, sizeof buf, "img%04zu", n);
    else
      std::snprintf(buf, sizeof buf, "clip%04zu", n);
    s.name = buf;
    std::vector<double> oy(k, 0.0), ox(k, 0.0);  // accumulated drift
    for (std::size_t t = 0; t < spec.clip_len; ++t) {
      if (t > 0) {
        for (std::size_t i = 0; i < k; ++i) {
          const double ang = rng.uniform(0.0, 2 * std::numbers::pi), mag = rng.uniform(0.0, spec.drift);
          const double m = std::max(objs[i].ry, objs[i].rx);
          double ny = objs[i].cy + mag * std::sin(ang), nx = objs[i].cx + mag * std::cos(ang);
          ny = std::clamp(ny, m, static_cast<double>(S) - m);
          nx = std::clamp(nx, m, static_cast<double>(S) - m);
          oy[i] += ny - objs[i].cy;
          ox[i] += nx - objs[i].cx;
          objs[i].cy = ny;
          objs[i].cx = nx;
        }
      }
      Image img(3, S, S), mask(1, S, S);
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          long owner = -1;
          for (std::size_t i = 0; i < k; ++i)
            if (objs[i].contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) owner = static_cast<long>(i);
          mask(y, x) = owner >= 0 ? 1.0 : 0.0;
          for (std::size_t c = 0; c < 3; ++c) {
            double v;
            if (owner >= 0) {
              // Object texture moves with the object.
              const long sy = static_cast<long>(std::lround(static_cast<double>(y) - oy[owner]));
              const long sx = static_cast<long>(std::lround(static_cast<double>(x) - ox[owner]));
              const std::size_t iy = static_cast<std::size_t>(((sy % long(S)) + long(S)) % long(S));
              const std::size_t ix = static_cast<std::size_t>(((sx % long(S)) + long(S)) % long(S));
              v = fg_mean + spec.texture * fg_tex[c][iy * S + ix];
            } else {
              v = bg_mean + spec.texture * bg_tex[c][y * S + x];
            }
            img.at(c, y, x) = std::clamp(v + tint[c], 0.0, 1.0);
          }
        }
      // Quantize to 8 bits so in-memory samples match what is written to disk.
      for (auto& v : img.data) v = from_byte(to_byte(v));
      s.frames.push_back(std::move(img));
      s.masks.push_back(std::move(mask));
    }
    ds.push_back(std::move(s));
  }
  return ds;
}

/// Writes images/, masks/ and manifest.txt under `dir`; returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec || !fs::is_directory(dir / "images") || !fs::is_directory(dir / "masks"))
    throw DataError("cannot create output directories under " + dir.string());
  Manifest m;
  m.dir = dir;
  for (const auto& s : ds) m.clips = m.clips || s.frames.size() > 1;
  for (const auto& s : ds) {
    ManifestEntry e{s.name, {}, {}};
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      std::string stem = s.name;
      if (m.clips) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "_f%03zu", t);
        stem += buf;
      }
      const std::string img = "images/" + stem + ".ppm", mask = "masks/" + stem + ".pgm";
      write_image(dir / img, s.frames[t]);
      write_image(dir / mask, s.masks[t]);
      e.images.push_back(img);
      e.masks.push_back(mask);
    }
    m.entries.push_back(std::move(e));
  }
  const fs::path path = dir / "manifest.txt";
  write_manifest(path, m);
  return path;
}

}  // namespace znext
