#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "znext/ops_spatial.hpp"
#include "znext/random.hpp"

namespace znext {

enum class Phase { Train, Eval };

enum class InitKind { Kaiming, Zeros, Ones };

/// A named model tensor: learnable parameter or buffer (BN running stats).
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool learnable = true;
  InitKind init = InitKind::Zeros;
  std::size_t fan_in = 1;
};

template <typename T>
using TensorList = std::vector<NamedTensor<T>>;

template <typename T>
std::size_t learnable_count(const TensorList<T>& list) {
  std::size_t n = 0;
  for (const auto& t : list)
    if (t.learnable) n += t.tensor.numel();
  return n;
}

/// Initializes every tensor in list order from one seeded stream: Kaiming
/// (fan-in) normal for kernels, zero biases/betas, unit gammas.
template <typename T>
void init_tensors(TensorList<T>& list, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& nt : list) {
    auto d = nt.tensor.data();
    switch (nt.init) {
      case InitKind::Kaiming: {
        const double sd = std::sqrt(2.0 / static_cast<double>(nt.fan_in));
        for (auto& v : d) v = static_cast<T>(rng.normal(0.0, sd));
        break;
      }
      case InitKind::Zeros:
        for (auto& v : d) v = T(0);
        break;
      case InitKind::Ones:
        for (auto& v : d) v = T(1);
        break;
    }
  }
}

template <typename T>
struct Conv {
  Tensor<T> weight, bias;
  Conv2dOptions opt;

  Conv() = default;
  Conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride = 1, std::size_t groups = 1,
       bool with_bias = true)
      : weight(Shape{cout, cin / groups, k, k}) {
    opt.stride = stride;
    opt.padding = k / 2;
    opt.groups = groups;
    if (with_bias) bias = Tensor<T>(Shape{cout});
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, opt); }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    const std::size_t fan_in = weight.dim(1) * weight.dim(2) * weight.dim(3);
    out.push_back({prefix + ".weight", weight, true, InitKind::Kaiming, fan_in});
    if (bias.defined()) out.push_back({prefix + ".bias", bias, true, InitKind::Zeros, 1});
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta, running_mean, running_var;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t c)
      : gamma(Shape{c}, T(1)), beta(Shape{c}), running_mean(Shape{c}), running_var(Shape{c}, T(1)) {}

  Tensor<T> operator()(const Tensor<T>& x, Phase phase) const {
    // Running buffers are shared handles; training mode updates them in place.
    Tensor<T> rm = running_mean, rv = running_var;
    return batchnorm2d(x, gamma, beta, rm, rv, BatchNormOptions{phase == Phase::Train});
  }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true, InitKind::Ones, 1});
    out.push_back({prefix + ".beta", beta, true, InitKind::Zeros, 1});
    out.push_back({prefix + ".running_mean", running_mean, false, InitKind::Zeros, 1});
    out.push_back({prefix + ".running_var", running_var, false, InitKind::Ones, 1});
  }
};

/// Conv -> BN -> ReLU.
template <typename T>
struct ConvBnRelu {
  Conv<T> conv;
  BatchNorm<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride = 1)
      : conv(cin, cout, k, stride), bn(cout) {}

  Tensor<T> operator()(const Tensor<T>& x, Phase phase) const { return relu(bn(conv(x), phase)); }

  void collect(const std::string& prefix, TensorList<T>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
  }
};

}  // namespace znext
