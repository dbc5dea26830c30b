#pragma once

#include <cmath>
#include <vector>

#include "znext/layers.hpp"

namespace znext {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the learnable entries of a tensor list.
template <typename T>
class Adam {
 public:
  Adam(const TensorList<T>& tensors, AdamOptions opt = {}) : opt_(opt) {
    for (const auto& nt : tensors) {
      if (!nt.learnable) continue;
      params_.push_back(nt.tensor);
      m_.emplace_back(nt.tensor.numel(), 0.0);
      v_.emplace_back(nt.tensor.numel(), 0.0);
    }
  }

  /// Marks parameters for gradient tracking and clears stale gradients.
  void prepare() {
    for (auto& p : params_) {
      p.set_requires_grad(true);
      p.zero_grad();
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto w = p.data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * gi;
        v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * gi * gi;
        const double upd = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - upd);
      }
    }
  }

  void release() {
    for (auto& p : params_) {
      p.set_requires_grad(false);
      p.zero_grad();
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamOptions opt_;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace znext
