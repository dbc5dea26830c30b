#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "znext/encoder.hpp"
#include "znext/mhsiu.hpp"
#include "znext/rgpu.hpp"

namespace znext {

enum class Fusion { Mhsiu, Add };

/// Architecture configuration. Training settings live in TrainConfig.
struct ModelConfig {
  EncoderConfig encoder;
  std::size_t heads = 4;                   // M
  std::size_t groups = 6;                  // G
  std::size_t clip_len = 1;                // T; 1 = image mode
  std::vector<double> scales{0.5, 1.0, 1.5};
  Fusion fusion = Fusion::Mhsiu;
  DownsampleMode downsample = DownsampleMode::Hybrid;
  TemporalOptions temporal;

  void validate() const {
    encoder.validate();
    if (heads == 0 || encoder.channels % heads != 0)
      throw ShapeError("model: channels " + std::to_string(encoder.channels) + " not divisible by heads " +
                       std::to_string(heads));
    if (groups < 2) throw ShapeError("model: groups must be >= 2 (got " + std::to_string(groups) + ")");
    if (clip_len < 1) throw ShapeError("model: clip length must be >= 1");
    if (scales.empty() || scales.size() > 3) throw ShapeError("model: between one and three scales required");
    for (double s : scales)
      if (s != 0.5 && s != 1.0 && s != 1.5)
        throw ShapeError("model: scale " + std::to_string(s) + " is not one of 0.5, 1.0, 1.5");
  }

  /// Canonical text of every field that changes the parameter layout or the
  /// forward computation.
  std::string canonical() const {
    std::ostringstream os;
    os << "levels=" << encoder.levels << ";channels=" << encoder.channels << ";widths=";
    for (auto w : encoder.stage_widths()) os << w << ',';
    os << ";heads=" << heads << ";groups=" << groups << ";clip_len=" << clip_len << ";scales=";
    for (auto s : scales) os << s << ',';
    os << ";fusion=" << (fusion == Fusion::Mhsiu ? "mhsiu" : "add") << ";downsample=" << to_string(downsample)
       << ";shift=" << temporal.shift << ";attention=" << temporal.attention
       << ";diffusion=" << temporal.diffusion;
    return os.str();
  }

  /// FNV-1a 64 of canonical().
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }
};

template <typename T>
class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    encoder_ = Encoder<T>(cfg_.encoder);
    const std::size_t C = cfg_.encoder.channels, L = cfg_.encoder.levels;
    const std::size_t K = cfg_.scales.size();
    for (std::size_t l = 0; l < L; ++l) {
      if (K > 1 && cfg_.fusion == Fusion::Mhsiu) mhsiu_.emplace_back(C, cfg_.heads, K);
      rgpu_.emplace_back(C, cfg_.groups, cfg_.clip_len, cfg_.temporal);
    }
    head1_ = ConvBnRelu<T>(C, C, 3);
    head2_ = ConvBnRelu<T>(C, C, 3);
    head_out_ = Conv<T>(C, 1, 1);
    for (std::size_t i = 0; i < K; ++i) {
      if (cfg_.scales[i] == 1.0) {
        main_ = i;
        break;
      }
    }
    for (double s : cfg_.scales)
      for (std::size_t k = 0; k < 3; ++k)
        if (kZoomScales[k] == s) used_[k] = true;
    collect_all();
  }

  const ModelConfig& config() const { return cfg_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Mhsiu<T>& mhsiu(std::size_t level) const { return mhsiu_.at(level); }
  const Rgpu<T>& rgpu(std::size_t level) const { return rgpu_.at(level); }

  /// Parameters and buffers in a fixed order.
  TensorList<T>& tensors() { return tensors_; }
  const TensorList<T>& tensors() const { return tensors_; }
  std::size_t param_count() const { return learnable_count(tensors_); }

  void init(std::uint64_t seed) { init_tensors(tensors_, seed); }

  std::size_t min_side() const { return std::size_t{1} << (cfg_.encoder.levels + 1); }

  /// Fused per-level features after scale integration, highest resolution first.
  std::vector<Tensor<T>> integrate_scales(const Tensor<T>& x, Phase phase) const {
    auto pyr = build_pyramid(x, min_side());
    auto fs = encoder_.encode(pyr, phase, used_);
    const std::size_t H = x.dim(2), W = x.dim(3);
    std::vector<Tensor<T>> fused;
    for (std::size_t l = 0; l < cfg_.encoder.levels; ++l) {
      const std::size_t h = level_side(H, l + 1), w = level_side(W, l + 1);
      std::vector<Tensor<T>> branches;
      for (double s : cfg_.scales) branches.push_back(align_feature(fs.levels[l][scale_index(s)], h, w, cfg_.downsample));
      if (branches.size() == 1) {
        fused.push_back(branches[0]);
      } else if (cfg_.fusion == Fusion::Mhsiu) {
        fused.push_back(mhsiu_[l].forward(branches, phase, main_));
      } else {
        Tensor<T> acc = branches[0];
        for (std::size_t i = 1; i < branches.size(); ++i) acc = add(acc, branches[i]);
        fused.push_back(acc);
      }
    }
    return fused;
  }

  /// Logits at input resolution. clip_len == 0: independent images;
  /// clip_len >= 1: the batch holds consecutive clips and the temporal
  /// branch runs inside every RGPU.
  Tensor<T> logits(const Tensor<T>& x, Phase phase, std::size_t clip_len) const {
    detail::require_rank4(x.shape(), "model", "input");
    if (x.dim(1) != 3) throw ShapeError("model: input must have 3 channels, got " + std::to_string(x.dim(1)));
    auto fused = integrate_scales(x, phase);
    Tensor<T> above;
    for (std::size_t l = cfg_.encoder.levels; l-- > 0;) above = rgpu_[l].forward(fused[l], above, clip_len, phase);
    Tensor<T> out = head_out_(head2_(head1_(above, phase), phase));
    return bilinear_resize(out, x.dim(2), x.dim(3));
  }

  /// Image path.
  Tensor<T> forward(const Tensor<T>& image, Phase phase = Phase::Eval) const {
    return sigmoid(logits(image, phase, 0));
  }

  /// Clip path: frames [B*T,3,H,W].
  Tensor<T> forward_clip(const Tensor<T>& frames, std::size_t clip_len, Phase phase = Phase::Eval) const {
    return sigmoid(logits(frames, phase, clip_len));
  }

  /// Inference in the configured mode (image path when clip_len == 1).
  Tensor<T> predict(const Tensor<T>& x) const {
    NoGradGuard ng;
    return cfg_.clip_len > 1 ? forward_clip(x, cfg_.clip_len, Phase::Eval) : forward(x, Phase::Eval);
  }

 private:
  static std::size_t scale_index(double s) {
    for (std::size_t k = 0; k < 3; ++k)
      if (kZoomScales[k] == s) return k;
    throw ShapeError("unknown scale");
  }

  void collect_all() {
    tensors_.clear();
    encoder_.collect("encoder", tensors_);
    for (std::size_t l = 0; l < mhsiu_.size(); ++l) mhsiu_[l].collect("mhsiu" + std::to_string(l + 1), tensors_);
    for (std::size_t l = 0; l < rgpu_.size(); ++l) rgpu_[l].collect("rgpu" + std::to_string(l + 1), tensors_);
    head1_.collect("head.cbr1", tensors_);
    head2_.collect("head.cbr2", tensors_);
    head_out_.collect("head.out", tensors_);
  }

  ModelConfig cfg_;
  Encoder<T> encoder_;
  std::vector<Mhsiu<T>> mhsiu_;
  std::vector<Rgpu<T>> rgpu_;
  ConvBnRelu<T> head1_, head2_;
  Conv<T> head_out_;
  std::size_t main_ = 0;
  std::array<bool, 3> used_{false, false, false};
  TensorList<T> tensors_;
};

/// Bilinear resize of a probability map to ground-truth size, clamped to [0,1].
template <typename T>
Tensor<T> predict_to_gt_size(const Tensor<T>& pred, std::size_t gt_h, std::size_t gt_w) {
  NoGradGuard ng;
  Tensor<T> out = bilinear_resize(pred, gt_h, gt_w);
  for (auto& v : out.data()) v = std::clamp(v, T(0), T(1));
  return out;
}

}  // namespace znext
