#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "znext/tensor.hpp"

namespace znext {

/// Planar image with values in [0,1], channel-major.
struct Image {
  std::size_t channels = 1, height = 0, width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t pixels() const { return height * width; }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  double& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  bool operator==(const Image&) const = default;
};

/// Stacks images of identical shape into [N,C,H,W].
template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw ShapeError("to_tensor: no images");
  const Image& f = *imgs[0];
  Tensor<T> t(Shape{imgs.size(), f.channels, f.height, f.width});
  auto d = t.data();
  std::size_t o = 0;
  for (const Image* im : imgs) {
    if (im->channels != f.channels || im->height != f.height || im->width != f.width)
      throw ShapeError("to_tensor: images differ in shape");
    for (double v : im->data) d[o++] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  return to_tensor<T>(std::vector<const Image*>{&img});
}

/// Item n of an [N,C,H,W] tensor.
template <typename T>
Image from_tensor(const Tensor<T>& t, std::size_t n = 0) {
  if (t.rank() != 4) throw ShapeError("from_tensor: expected rank 4, got " + shape_str(t.shape()));
  Image img(t.dim(1), t.dim(2), t.dim(3));
  auto d = t.data();
  const std::size_t per = img.data.size();
  for (std::size_t i = 0; i < per; ++i) img.data[i] = static_cast<double>(d[n * per + i]);
  return img;
}

}  // namespace znext
