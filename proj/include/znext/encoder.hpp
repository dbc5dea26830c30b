#pragma once

#include <array>
#include <string>
#include <vector>

#include "znext/layers.hpp"
#include "znext/pyramid.hpp"

namespace znext {

struct EncoderConfig {
  std::size_t levels = 4;
  std::size_t channels = 16;        // C, width of every compressed feature
  std::vector<std::size_t> widths;  // stage widths; empty -> C * (i + 1)

  std::vector<std::size_t> stage_widths() const {
    if (!widths.empty()) return widths;
    std::vector<std::size_t> w;
    for (std::size_t i = 0; i < levels; ++i) w.push_back(channels * (i + 1));
    return w;
  }

  void validate() const {
    if (levels < 2) throw ShapeError("encoder: levels must be >= 2, got " + std::to_string(levels));
    if (channels < 4) throw ShapeError("encoder: channels must be >= 4, got " + std::to_string(channels));
    if (!widths.empty() && widths.size() != levels)
      throw ShapeError("encoder: " + std::to_string(widths.size()) + " stage widths given for " +
                       std::to_string(levels) + " levels");
  }
};

/// Spatial size after `level` stride-2 stages (3x3, padding 1): ceil halving.
inline std::size_t level_side(std::size_t side, std::size_t level) {
  for (std::size_t i = 0; i < level; ++i) side = (side + 1) / 2;
  return side;
}

/// Per-level, per-scale compressed features. Unused scales stay undefined.
template <typename T>
struct FeatureSet {
  std::vector<std::array<Tensor<T>, 3>> levels;  // [level][scale index of kZoomScales]
};

/// Shared triplet encoder: one stack of stride-2 stages followed by per-level
/// 1x1 channel compression, applied with the same weights to every scale.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto widths = cfg_.stage_widths();
    std::size_t cin = 3;
    for (std::size_t i = 0; i < cfg_.levels; ++i) {
      Stage s{ConvBnRelu<T>(cin, widths[i], 3, 2), ConvBnRelu<T>(widths[i], widths[i], 3, 1),
              ConvBnRelu<T>(widths[i], cfg_.channels, 1, 1)};
      stages_.push_back(std::move(s));
      cin = widths[i];
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  /// Features of one view at every level.
  std::vector<Tensor<T>> encode_view(const Tensor<T>& x, Phase phase) const {
    detail::require_rank4(x.shape(), "encode", "view");
    const std::size_t need = std::size_t{1} << cfg_.levels;
    if (x.dim(2) < need || x.dim(3) < need)
      throw ShapeError("encode: view " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                       " is smaller than 2^levels = " + std::to_string(need));
    std::vector<Tensor<T>> out;
    Tensor<T> h = x;
    for (const auto& s : stages_) {
      h = s.second(s.first(h, phase), phase);
      out.push_back(s.compress(h, phase));
    }
    return out;
  }

  /// Encodes the selected pyramid views (mask indexed like kZoomScales).
  FeatureSet<T> encode(const ScalePyramid<T>& pyr, Phase phase, std::array<bool, 3> used = {true, true, true}) const {
    FeatureSet<T> fs;
    fs.levels.resize(cfg_.levels);
    for (std::size_t k = 0; k < 3; ++k) {
      if (!used[k]) continue;
      auto feats = encode_view(pyr.views[k], phase);
      for (std::size_t l = 0; l < cfg_.levels; ++l) fs.levels[l][k] = feats[l];
    }
    return fs;
  }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string p = prefix + ".stage" + std::to_string(i + 1);
      stages_[i].first.collect(p + ".down", out);
      stages_[i].second.collect(p + ".conv", out);
      stages_[i].compress.collect(p + ".compress", out);
    }
  }

 private:
  struct Stage {
    ConvBnRelu<T> first;     // stride 2
    ConvBnRelu<T> second;
    ConvBnRelu<T> compress;  // 1x1 to C
  };
  EncoderConfig cfg_;
  std::vector<Stage> stages_;
};

}  // namespace znext
