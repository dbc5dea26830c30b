#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "znext/ops_basic.hpp"
#include "znext/random.hpp"

namespace znext {

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // Coordinates probed per input; larger inputs are sampled with a fixed seed.
  std::size_t max_coords = 256;
  std::uint64_t seed = 7;
};

struct GradcheckReport {
  std::string name;
  std::vector<double> max_rel_error;  // one per input
  double worst = 0.0;
  std::size_t kinks = 0;  // coordinates settled by a one-sided difference
  bool passed = false;
  std::string failure;  // non-empty on NaN/exception
};

using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares tape gradients with central finite differences.
///
/// The function output is reduced to a scalar through a fixed random
/// projection, so every output element contributes to the checked gradient.
/// When the central difference straddles a kink (ReLU, max pooling) the
/// coordinate is accepted if either one-sided difference agrees, since the
/// side without the kink is smooth.
inline GradcheckReport gradcheck(const std::string& name, const GradFn& f, std::vector<Tensor<double>> inputs,
                                 const GradcheckOptions& opt = {}) {
  GradcheckReport rep;
  rep.name = name;
  Rng rng(opt.seed);
  Tape<double>::active().clear();
  try {
    for (auto& x : inputs) {
      x.zero_grad();
      x.set_requires_grad(true);
    }
    Tensor<double> y = f(inputs);
    Tensor<double> proj = rand_uniform<double>(y.shape(), rng, -1.0, 1.0);
    Tensor<double> loss = sum(mul(y, proj));
    backward(loss);

    auto project = [&]() {
      NoGradGuard ng;
      Tensor<double> yy = f(inputs);
      double acc = 0;
      for (std::size_t i = 0; i < yy.numel(); ++i) acc += yy.data()[i] * proj.data()[i];
      return acc;
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto& x = inputs[k];
      std::vector<std::size_t> coords(x.numel());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
      if (coords.size() > opt.max_coords) {
        std::shuffle(coords.begin(), coords.end(), rng.engine());
        coords.resize(opt.max_coords);
      }
      double worst = 0.0;
      for (auto i : coords) {
        const double analytic = x.has_grad() ? x.grad()[i] : 0.0;
        const double orig = x.data()[i];
        x.data()[i] = orig + opt.eps;
        const double up = project();
        x.data()[i] = orig - opt.eps;
        const double down = project();
        x.data()[i] = orig;
        const double numeric = (up - down) / (2.0 * opt.eps);
        if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
          rep.failure = "NaN at input " + std::to_string(k) + " index " + std::to_string(i);
          rep.max_rel_error.push_back(INFINITY);
          rep.worst = INFINITY;
          return rep;
        }
        auto rel = [&](double n) {
          return std::fabs(analytic - n) / std::max({std::fabs(analytic), std::fabs(n), opt.floor});
        };
        double err = rel(numeric);
        if (err >= opt.tol) {
          const double mid = project();
          const double one_sided = std::min(rel((up - mid) / opt.eps), rel((mid - down) / opt.eps));
          if (one_sided < opt.tol) {
            err = one_sided;
            ++rep.kinks;
          }
        }
        worst = std::max(worst, err);
      }
      rep.max_rel_error.push_back(worst);
      rep.worst = std::max(rep.worst, worst);
    }
    rep.passed = rep.worst < opt.tol;
  } catch (const std::exception& e) {
    Tape<double>::active().clear();
    rep.failure = e.what();
    rep.worst = INFINITY;
    rep.passed = false;
  }
  for (auto& x : inputs) x.set_requires_grad(false);
  return rep;
}

}  // namespace znext
