#pragma once

#include <array>
#include <cmath>
#include <string>

#include "znext/ops_spatial.hpp"

namespace znext {

inline constexpr std::array<double, 3> kZoomScales{0.5, 1.0, 1.5};

/// How larger-than-main features are reduced to the main resolution.
enum class DownsampleMode { Hybrid, Max, Avg, Bilinear, Bicubic };

inline std::string to_string(DownsampleMode m) {
  switch (m) {
    case DownsampleMode::Hybrid: return "hybrid";
    case DownsampleMode::Max: return "max";
    case DownsampleMode::Avg: return "avg";
    case DownsampleMode::Bilinear: return "bilinear";
    case DownsampleMode::Bicubic: return "bicubic";
  }
  return "?";
}

inline DownsampleMode parse_downsample(const std::string& s) {
  if (s == "hybrid") return DownsampleMode::Hybrid;
  if (s == "max") return DownsampleMode::Max;
  if (s == "avg") return DownsampleMode::Avg;
  if (s == "bilinear") return DownsampleMode::Bilinear;
  if (s == "bicubic") return DownsampleMode::Bicubic;
  throw ShapeError("unknown downsample mode '" + s + "'");
}

/// Side length of a zoomed view, rounded to the nearest even integer.
inline std::size_t zoom_side(std::size_t side, double k) {
  return static_cast<std::size_t>(2.0 * std::round(static_cast<double>(side) * k / 2.0));
}

/// The 0.5x / 1.0x / 1.5x views of one input batch.
template <typename T>
struct ScalePyramid {
  std::array<Tensor<T>, 3> views;  // indexed like kZoomScales

  const Tensor<T>& at(double k) const {
    for (std::size_t i = 0; i < kZoomScales.size(); ++i)
      if (kZoomScales[i] == k) return views[i];
    throw ShapeError("scale " + std::to_string(k) + " is not part of the zoom pyramid");
  }
};

/// Re-scales the input to imitate zooming out (0.5x) and in (1.5x). The 1.0x
/// entry is the input itself.
template <typename T>
ScalePyramid<T> build_pyramid(const Tensor<T>& image, std::size_t min_side = 32) {
  detail::require_rank4(image.shape(), "build_pyramid", "image");
  const std::size_t H = image.dim(2), W = image.dim(3);
  if (H < min_side || W < min_side)
    throw ShapeError("build_pyramid: input " + std::to_string(H) + "x" + std::to_string(W) +
                     " is smaller than the minimum side " + std::to_string(min_side));
  if (H % 4 != 0 || W % 4 != 0)
    throw ShapeError("build_pyramid: input sides must be divisible by 4, got " + std::to_string(H) + "x" +
                     std::to_string(W));
  ScalePyramid<T> p;
  p.views[0] = bilinear_resize(image, zoom_side(H, 0.5), zoom_side(W, 0.5));
  p.views[1] = image;
  p.views[2] = bilinear_resize(image, zoom_side(H, 1.5), zoom_side(W, 1.5));
  return p;
}

/// Mean of adaptive max pooling and adaptive average pooling.
template <typename T>
Tensor<T> hybrid_downsample(const Tensor<T>& f, std::size_t oh, std::size_t ow) {
  return scale(add(adaptive_pool(f, oh, ow, PoolMode::Max), adaptive_pool(f, oh, ow, PoolMode::Avg)), T(0.5));
}

template <typename T>
Tensor<T> downsample(const Tensor<T>& f, std::size_t oh, std::size_t ow, DownsampleMode mode) {
  switch (mode) {
    case DownsampleMode::Hybrid: return hybrid_downsample(f, oh, ow);
    case DownsampleMode::Max: return adaptive_pool(f, oh, ow, PoolMode::Max);
    case DownsampleMode::Avg: return adaptive_pool(f, oh, ow, PoolMode::Avg);
    case DownsampleMode::Bilinear:
    case DownsampleMode::Bicubic:  // approximated by bilinear
      return bilinear_resize(f, oh, ow);
  }
  return f;
}

/// Brings one scale's feature map to the main resolution: larger maps are
/// downsampled, smaller ones bilinearly upsampled, equal ones passed through.
template <typename T>
Tensor<T> align_feature(const Tensor<T>& f, std::size_t oh, std::size_t ow,
                        DownsampleMode mode = DownsampleMode::Hybrid) {
  detail::require_rank4(f.shape(), "align_feature", "feature");
  const std::size_t h = f.dim(2), w = f.dim(3);
  if (h == oh && w == ow) return f;
  if (h >= oh && w >= ow) return downsample(f, oh, ow, mode);
  return bilinear_resize(f, oh, ow);
}

template <typename T>
struct AlignedScales {
  Tensor<T> f05, f10, f15;
};

/// U(f05), f10, D(f15) at f10's resolution.
template <typename T>
AlignedScales<T> align_to_main(const Tensor<T>& f05, const Tensor<T>& f10, const Tensor<T>& f15,
                               DownsampleMode mode = DownsampleMode::Hybrid) {
  detail::require_rank4(f10.shape(), "align_to_main", "main feature");
  const std::size_t C = f10.dim(1);
  if (f05.dim(1) != C || f15.dim(1) != C)
    throw ShapeError("align_to_main: channel mismatch (" + std::to_string(f05.dim(1)) + ", " +
                     std::to_string(C) + ", " + std::to_string(f15.dim(1)) + ")");
  const std::size_t h = f10.dim(2), w = f10.dim(3);
  return {align_feature(f05, h, w, mode), f10, align_feature(f15, h, w, mode)};
}

}  // namespace znext
