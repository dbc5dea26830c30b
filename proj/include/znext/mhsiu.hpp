#pragma once

#include <string>
#include <vector>

#include "znext/layers.hpp"

namespace znext {

/// Multi-head scale integration unit.
///
/// K aligned scale features [N,C,h,w] are regrouped so that head m sees the
/// m-th C/M-channel slice of every scale. Per head, a 3x3 conv produces K
/// attention logits that are softmax-normalized over the scale axis at each
/// pixel, and a 1x1 conv produces K feature branches of C/M channels. The
/// head output is the attention-weighted sum of its branches. Heads are
/// concatenated back to C channels, the main-scale feature is added, and the
/// result goes through BN + ReLU.
template <typename T>
class Mhsiu {
 public:
  Mhsiu() = default;
  Mhsiu(std::size_t channels, std::size_t heads, std::size_t scales = 3)
      : c_(channels), m_(heads), k_(scales) {
    if (heads == 0 || channels % heads != 0)
      throw ShapeError("mhsiu: channels " + std::to_string(channels) + " not divisible by heads " +
                       std::to_string(heads));
    if (scales == 0) throw ShapeError("mhsiu: need at least one scale");
    attn_ = Conv<T>(k_ * c_, k_ * m_, 3, 1, m_);
    feat_ = Conv<T>(k_ * c_, k_ * c_, 1, 1, m_);
    post_ = BatchNorm<T>(c_);
  }

  std::size_t heads() const { return m_; }
  std::size_t scales() const { return k_; }

  /// Channel-regrouped concatenation: head-major, then scale, then channel.
  Tensor<T> group_inputs(const std::vector<Tensor<T>>& fs) const {
    check_inputs(fs);
    const std::size_t N = fs[0].dim(0), h = fs[0].dim(2), w = fs[0].dim(3);
    std::vector<Tensor<T>> parts;
    for (const auto& f : fs) parts.push_back(reshape(f, Shape{N, m_, 1, (c_ / m_) * h * w}));
    return reshape(concat(parts, 2), Shape{N, k_ * c_, h, w});
  }

  /// Per-head attention over scales: [N, M, K, h*w], sums to 1 over axis 2.
  Tensor<T> attention(const Tensor<T>& grouped) const {
    const std::size_t N = grouped.dim(0), h = grouped.dim(2), w = grouped.dim(3);
    return softmax(reshape(attn_(grouped), Shape{N, m_, k_, h * w}), 2);
  }

  /// Attention-weighted fusion before the residual, [N,C,h,w].
  Tensor<T> fuse(const std::vector<Tensor<T>>& fs) const {
    Tensor<T> g = group_inputs(fs);
    const std::size_t N = g.dim(0), h = g.dim(2), w = g.dim(3);
    Tensor<T> a = reshape(attention(g), Shape{N, m_, k_, 1, h * w});
    Tensor<T> branches = reshape(feat_(g), Shape{N, m_, k_, c_ / m_, h * w});
    return reshape(sum_axis(mul(a, branches), 2), Shape{N, c_, h, w});
  }

  /// `main` indexes the entry of `fs` used for the residual connection.
  Tensor<T> forward(const std::vector<Tensor<T>>& fs, Phase phase, std::size_t main = 1) const {
    if (main >= fs.size()) throw ShapeError("mhsiu: main scale index out of range");
    return relu(post_(add(fs[main], fuse(fs)), phase));
  }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    attn_.collect(prefix + ".attn", out);
    feat_.collect(prefix + ".feat", out);
    post_.collect(prefix + ".post_bn", out);
  }

  const Conv<T>& attn_conv() const { return attn_; }
  const Conv<T>& feat_conv() const { return feat_; }
  const BatchNorm<T>& post_bn() const { return post_; }

 private:
  void check_inputs(const std::vector<Tensor<T>>& fs) const {
    if (fs.size() != k_)
      throw ShapeError("mhsiu: expected " + std::to_string(k_) + " scale inputs, got " +
                       std::to_string(fs.size()));
    for (const auto& f : fs) {
      detail::require_rank4(f.shape(), "mhsiu", "scale feature");
      if (f.shape() != fs[0].shape())
        throw ShapeError("mhsiu: scale features differ in shape: " + shape_str(f.shape()) + " vs " +
                         shape_str(fs[0].shape()));
      if (f.dim(1) != c_)
        throw ShapeError("mhsiu: feature has " + std::to_string(f.dim(1)) + " channels, expected " +
                         std::to_string(c_));
    }
  }

  std::size_t c_ = 0, m_ = 1, k_ = 3;
  Conv<T> attn_, feat_;
  BatchNorm<T> post_;
};

/// Learnable parameters of one MHSIU with `scales` branches.
inline std::size_t mhsiu_param_count(std::size_t channels, std::size_t heads, std::size_t scales = 3) {
  if (heads == 0 || channels % heads != 0)
    throw ShapeError("mhsiu_param_count: channels " + std::to_string(channels) + " not divisible by heads " +
                     std::to_string(heads));
  const std::size_t C = channels, M = heads, K = scales;
  const std::size_t attn = (K * M) * (K * C / M) * 9 + K * M;
  const std::size_t feat = (K * C) * (K * C / M) + K * C;
  const std::size_t bn = 2 * C;
  return attn + feat + bn;
}

/// Convenience wrapper for the three-scale case.
template <typename T>
Tensor<T> mhsiu_forward(const Tensor<T>& f05, const Tensor<T>& f10, const Tensor<T>& f15, const Mhsiu<T>& unit,
                        Phase phase) {
  return unit.forward({f05, f10, f15}, phase, 1);
}

}  // namespace znext
