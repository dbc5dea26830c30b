#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "znext/layers.hpp"

namespace znext {

/// Stage switches of the video-only branch.
struct TemporalOptions {
  bool shift = true;      // off: X = f~ instead of shift(f~) - f~
  bool attention = true;  // off: Z = X
  bool diffusion = true;  // off: skip the circular T x 3 x 3 convolution
};

/// Output of the group-wise iteration: one (g^2, g^3) pair per group.
template <typename T>
struct GroupFeatures {
  std::vector<Tensor<T>> modulating;  // g_j^2
  std::vector<Tensor<T>> modulated;   // g_j^3
};

/// f^ = f_mhsiu + U(f_above); the topmost level passes f_mhsiu through.
template <typename T>
Tensor<T> rgpu_input(const Tensor<T>& f_mhsiu, const Tensor<T>& f_above) {
  if (!f_above.defined()) return f_mhsiu;
  detail::require_rank4(f_above.shape(), "rgpu_input", "upper feature");
  if (f_above.dim(1) != f_mhsiu.dim(1))
    throw ShapeError("rgpu_input: channel mismatch (" + std::to_string(f_above.dim(1)) + " vs " +
                     std::to_string(f_mhsiu.dim(1)) + ")");
  if (f_above.dim(0) != f_mhsiu.dim(0)) throw ShapeError("rgpu_input: batch mismatch");
  return add(f_mhsiu, bilinear_resize(f_above, f_mhsiu.dim(2), f_mhsiu.dim(3)));
}

/// Rich granularity perception unit.
template <typename T>
class Rgpu {
 public:
  Rgpu() = default;
  Rgpu(std::size_t channels, std::size_t groups, std::size_t clip_len = 1, TemporalOptions topt = {})
      : c_(channels), g_(groups), t_(clip_len), topt_(topt) {
    if (groups < 2) throw ShapeError("rgpu: group count must be >= 2, got " + std::to_string(groups));
    if (clip_len < 1) throw ShapeError("rgpu: clip length must be >= 1");
    const std::size_t C = c_;
    expand_ = Conv<T>(C, g_ * C, 1);
    for (std::size_t i = 0; i < g_; ++i) {
      if (i == 0)
        blocks_.emplace_back(C, 3 * C, 3);
      else if (i + 1 == g_)
        blocks_.emplace_back(2 * C, 2 * C, 3);
      else
        blocks_.emplace_back(2 * C, 3 * C, 3);
    }
    gate_in_ = Conv<T>(g_ * C, C, 1);
    gate_out_ = Conv<T>(C, g_ * C, 1);
    reduce_ = Conv<T>(g_ * C, C, 1);
    fuse1_ = ConvBnRelu<T>(C, C, 3);
    fuse2_ = ConvBnRelu<T>(C, C, 3);
    wq_ = Tensor<T>(Shape{C, C});
    wk_ = Tensor<T>(Shape{C, C});
    wv_ = Tensor<T>(Shape{C, C});
    tconv_ = Tensor<T>(Shape{C, C, t_, 3, 3});
  }

  std::size_t groups() const { return g_; }
  std::size_t clip_len() const { return t_; }

  /// Group-wise iteration: expand to G*C channels, split into G groups and
  /// mix them sequentially, each group taking g^1 of its predecessor.
  GroupFeatures<T> group_iterate(const Tensor<T>& fhat, Phase phase) const {
    check_feature(fhat, "group_iterate");
    auto groups = chunk(expand_(fhat), 1, g_);
    GroupFeatures<T> out;
    Tensor<T> prev;
    for (std::size_t i = 0; i < g_; ++i) {
      if (i == 0) {
        auto parts = chunk(blocks_[i](groups[i], phase), 1, 3);
        prev = parts[0];
        out.modulating.push_back(parts[1]);
        out.modulated.push_back(parts[2]);
      } else if (i + 1 == g_) {
        auto parts = chunk(blocks_[i](concat(std::vector<Tensor<T>>{groups[i], prev}, 1), phase), 1, 2);
        out.modulating.push_back(parts[0]);
        out.modulated.push_back(parts[1]);
      } else {
        auto parts = chunk(blocks_[i](concat(std::vector<Tensor<T>>{groups[i], prev}, 1), phase), 1, 3);
        prev = parts[0];
        out.modulating.push_back(parts[1]);
        out.modulated.push_back(parts[2]);
      }
    }
    return out;
  }

  /// omega = sigmoid(MLP(GAP([g^2]))) in (0,1)^{G*C}.
  Tensor<T> modulation_vector(const GroupFeatures<T>& gf) const {
    Tensor<T> cat = concat(gf.modulating, 1);
    Tensor<T> pooled = adaptive_pool(cat, 1, 1, PoolMode::Avg);
    return sigmoid(gate_out_(relu(gate_in_(pooled))));
  }

  /// f~ = reduce(omega * [g^3]).
  Tensor<T> channel_modulate(const GroupFeatures<T>& gf) const {
    return modulate_with(modulation_vector(gf), gf);
  }

  Tensor<T> modulate_with(const Tensor<T>& omega, const GroupFeatures<T>& gf) const {
    return reduce_(mul(concat(gf.modulated, 1), omega));
  }

  /// Difference-aware branch over one clip [T,C,h,w]. A single frame or a
  /// clip of identical frames yields exact zeros.
  Tensor<T> temporal_branch(const Tensor<T>& ftilde) const {
    check_feature(ftilde, "temporal_branch");
    const std::size_t T_ = ftilde.dim(0), C = c_, h = ftilde.dim(2), w = ftilde.dim(3);
    const std::size_t hw = h * w;
    Tensor<T> x = topt_.shift ? sub(temporal_shift(ftilde), ftilde) : ftilde;
    Tensor<T> z = x;
    if (topt_.attention) {
      Tensor<T> xt = transpose_last2(reshape(x, Shape{T_, C, hw}));  // [T, hw, C]
      Tensor<T> q = matmul(xt, wq_);
      Tensor<T> k = matmul(xt, wk_);
      Tensor<T> v = matmul(xt, wv_);
      Tensor<T> scores = scale(matmul(transpose_last2(k), q), T(1) / std::sqrt(static_cast<T>(hw)));
      Tensor<T> s = softmax(scores, 1);  // normalize over key channels
      z = reshape(transpose_last2(matmul(v, s)), Shape{T_, C, h, w});
    }
    if (topt_.diffusion) {
      if (T_ != t_)
        throw ShapeError("temporal_branch: clip of " + std::to_string(T_) + " frames, kernel built for " +
                         std::to_string(t_));
      z = temporal_conv_circular(z, tconv_);
    }
    return z;
  }

  /// Full unit. With clip_len == 0 the batch is a set of independent images
  /// and the temporal branch is not built into the graph; otherwise the batch
  /// axis holds consecutive clips of clip_len frames.
  Tensor<T> forward(const Tensor<T>& f_mhsiu, const Tensor<T>& f_above, std::size_t clip_len, Phase phase) const {
    Tensor<T> fhat = rgpu_input(f_mhsiu, f_above);
    Tensor<T> ftilde = channel_modulate(group_iterate(fhat, phase));
    if (clip_len > 0) {
      const std::size_t N = ftilde.dim(0);
      if (N % clip_len != 0)
        throw ShapeError("rgpu: batch of " + std::to_string(N) + " frames is not a multiple of clip length " +
                         std::to_string(clip_len));
      auto clips = chunk(ftilde, 0, N / clip_len);
      std::vector<Tensor<T>> routed;
      for (const auto& c : clips) routed.push_back(temporal_branch(c));
      ftilde = add(ftilde, routed.size() == 1 ? routed[0] : concat(routed, 0));
    }
    return fuse2_(fuse1_(add(fhat, ftilde), phase), phase);
  }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    expand_.collect(prefix + ".expand", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".group" + std::to_string(i + 1), out);
    gate_in_.collect(prefix + ".gate_in", out);
    gate_out_.collect(prefix + ".gate_out", out);
    reduce_.collect(prefix + ".reduce", out);
    fuse1_.collect(prefix + ".fuse1", out);
    fuse2_.collect(prefix + ".fuse2", out);
    out.push_back({prefix + ".w_q", wq_, true, InitKind::Kaiming, c_});
    out.push_back({prefix + ".w_k", wk_, true, InitKind::Kaiming, c_});
    out.push_back({prefix + ".w_v", wv_, true, InitKind::Kaiming, c_});
    out.push_back({prefix + ".temporal_conv", tconv_, true, InitKind::Kaiming, c_ * t_ * 9});
  }

  const Conv<T>& expand_conv() const { return expand_; }
  const ConvBnRelu<T>& block(std::size_t i) const { return blocks_.at(i); }
  const Conv<T>& gate_in() const { return gate_in_; }
  const Conv<T>& gate_out() const { return gate_out_; }
  const Conv<T>& reduce_conv() const { return reduce_; }
  const Tensor<T>& w_q() const { return wq_; }
  const Tensor<T>& w_k() const { return wk_; }
  const Tensor<T>& w_v() const { return wv_; }
  const Tensor<T>& temporal_kernel() const { return tconv_; }

 private:
  void check_feature(const Tensor<T>& f, const char* op) const {
    detail::require_rank4(f.shape(), op, "feature");
    if (f.dim(1) != c_)
      throw ShapeError(std::string(op) + ": feature has " + std::to_string(f.dim(1)) + " channels, expected " +
                       std::to_string(c_));
  }

  std::size_t c_ = 0, g_ = 2, t_ = 1;
  TemporalOptions topt_;
  Conv<T> expand_;
  std::vector<ConvBnRelu<T>> blocks_;
  Conv<T> gate_in_, gate_out_, reduce_;
  ConvBnRelu<T> fuse1_, fuse2_;
  Tensor<T> wq_, wk_, wv_, tconv_;
};

}  // namespace znext
