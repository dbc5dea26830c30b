#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "znext/ops_basic.hpp"

namespace znext {

enum class UalForm { Pow, Exp, WeightedBce, None };
enum class Schedule { Cosine, Linear, Constant };

struct LossConfig {
  UalForm form = UalForm::Pow;
  double alpha = 2.0;
  Schedule schedule = Schedule::Cosine;
  double t_min = 0.0;  // fractions of the total step count
  double t_max = 1.0;
  double lambda_min = 0.0;
  double lambda_max = 1.0;

  void validate() const {
    if (!(alpha > 0)) throw Error("loss: alpha must be positive");
    if (!(t_min >= 0 && t_min < t_max && t_max <= 1))
      throw Error("loss: interval must satisfy 0 <= t_min < t_max <= 1");
  }
};

inline std::string to_string(UalForm f) {
  switch (f) {
    case UalForm::Pow: return "pow";
    case UalForm::Exp: return "exp";
    case UalForm::WeightedBce: return "weighted-bce";
    case UalForm::None: return "none";
  }
  return "?";
}

inline std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::Cosine: return "cosine";
    case Schedule::Linear: return "linear";
    case Schedule::Constant: return "constant";
  }
  return "?";
}

inline Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::Cosine;
  if (s == "linear") return Schedule::Linear;
  if (s == "constant") return Schedule::Constant;
  throw Error("unknown schedule '" + s + "' (expected cosine, linear or constant)");
}

/// Parses "pow2", "exp1", "pow1/8", "weighted-bce" or "off"/"none" into
/// form and alpha.
inline void parse_ual(const std::string& s, LossConfig& cfg) {
  if (s == "off" || s == "none") {
    cfg.form = UalForm::None;
    return;
  }
  if (s == "weighted-bce" || s == "wbce") {
    cfg.form = UalForm::WeightedBce;
    cfg.alpha = 2.0;
    return;
  }
  std::string rest;
  if (s.rfind("pow", 0) == 0) {
    cfg.form = UalForm::Pow;
    rest = s.substr(3);
  } else if (s.rfind("exp", 0) == 0) {
    cfg.form = UalForm::Exp;
    rest = s.substr(3);
  } else {
    throw Error("unknown UAL form '" + s + "' (expected powA, expA, weighted-bce or off)");
  }
  if (rest.empty()) return;
  try {
    std::size_t slash = rest.find('/');
    std::size_t used = 0;
    double a = std::stod(rest.substr(0, slash), &used);
    if (used != (slash == std::string::npos ? rest.size() : slash)) throw std::invalid_argument(rest);
    if (slash != std::string::npos) {
      const std::string den = rest.substr(slash + 1);
      double b = std::stod(den, &used);
      if (used != den.size()) throw std::invalid_argument(rest);
      a /= b;
    }
    cfg.alpha = a;
  } catch (const std::logic_error&) {
    throw Error("bad UAL exponent in '" + s + "'");
  }
  cfg.validate();
}

/// Phi_pow^alpha(p) = 1 - |2p - 1|^alpha.
inline double phi_pow(double p, double alpha) { return 1.0 - std::pow(std::abs(2.0 * p - 1.0), alpha); }

/// Phi_exp^alpha(p) = exp(-(alpha (p - 0.5))^2).
inline double phi_exp(double p, double alpha) {
  const double u = alpha * (p - 0.5);
  return std::exp(-u * u);
}

/// d Phi_pow / dp, with subgradient 0 at p = 0.5.
inline double phi_pow_grad(double p, double alpha) {
  const double d = 2.0 * p - 1.0;
  if (d == 0.0) return 0.0;
  return -2.0 * alpha * std::pow(std::abs(d), alpha - 1.0) * (d > 0 ? 1.0 : -1.0);
}

inline double phi_exp_grad(double p, double alpha) { return -2.0 * alpha * alpha * (p - 0.5) * phi_exp(p, alpha); }

/// UAL weight at step t of total_steps.
inline double lambda_at(double t, double total_steps, const LossConfig& cfg) {
  if (cfg.schedule == Schedule::Constant) return 1.0;
  const double lo = cfg.t_min * total_steps, hi = cfg.t_max * total_steps;
  if (t <= lo) return cfg.lambda_min;
  if (t >= hi) return cfg.lambda_max;
  const double r = (t - lo) / (hi - lo);
  const double span = cfg.lambda_max - cfg.lambda_min;
  if (cfg.schedule == Schedule::Linear) return cfg.lambda_min + r * span;
  return cfg.lambda_min + 0.5 * (1.0 - std::cos(std::numbers::pi * r)) * span;
}

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Per-element map f(x, g) with derivative df(x, g) in x; g is a constant.
template <typename T, typename F, typename DF>
Tensor<T> pointwise_target(const Tensor<T>& x, const Tensor<T>& g, F f, DF df, const char* name) {
  require_same_shape(x.shape(), g.shape(), name);
  Tensor<T> out(x.shape());
  auto X = x.data();
  auto G = g.data();
  auto Y = out.data();
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = f(X[i], G[i]);
  check_finite<T>(out.data(), name);
  if (any_requires_grad<T>({&x})) {
    auto xn = x.node(), gn = g.node(), on = out.node();
    record(out, [xn, gn, on, df] {
      if (on->grad.empty()) return;
      auto* gx = grad_of(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < on->grad.size(); ++i) (*gx)[i] += on->grad[i] * df(xn->data[i], gn->data[i]);
    });
  }
  return out;
}

}  // namespace detail

inline constexpr double kBceEps = 1e-7;

/// Per-pixel BCE on probabilities clamped to [eps, 1 - eps].
template <typename T>
Tensor<T> bce_map(const Tensor<T>& p, const Tensor<T>& g) {
  const T lo = T(kBceEps), hi = T(1) - T(kBceEps);
  return detail::pointwise_target(
      p, g,
      [lo, hi](T v, T y) {
        const T q = std::clamp(v, lo, hi);
        return -y * std::log(q) - (T(1) - y) * std::log(T(1) - q);
      },
      [lo, hi](T v, T y) {
        if (v < lo || v > hi) return T(0);
        return (v - y) / (v * (T(1) - v));
      },
      "bce");
}

/// Per-pixel BCE from logits: max(z,0) - z g + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> bce_logits_map(const Tensor<T>& z, const Tensor<T>& g) {
  return detail::pointwise_target(
      z, g, [](T v, T y) { return std::max(v, T(0)) - v * y + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T y) { return sigmoid_scalar(v) - y; }, "bce_logits");
}

template <typename T>
Tensor<T> bce(const Tensor<T>& p, const Tensor<T>& g) {
  return mean(bce_map(p, g));
}

template <typename T>
Tensor<T> bce_logits(const Tensor<T>& z, const Tensor<T>& g) {
  return mean(bce_logits_map(z, g));
}

/// Certainty |2p - 1|.
template <typename T>
Tensor<T> delta(const Tensor<T>& p) {
  return detail::unary(
      p, [](T v) { return std::abs(T(2) * v - T(1)); },
      [](T v, T) {
        const T d = T(2) * v - T(1);
        return d > 0 ? T(2) : (d < 0 ? T(-2) : T(0));
      },
      "delta");
}

/// Per-pixel ambiguity Phi(p) for the pow or exp form.
template <typename T>
Tensor<T> ual_map(const Tensor<T>& p, UalForm form, double alpha) {
  switch (form) {
    case UalForm::Pow:
    case UalForm::WeightedBce:
      return detail::unary(
          p, [alpha](T v) { return static_cast<T>(phi_pow(v, alpha)); },
          [alpha](T v, T) { return static_cast<T>(phi_pow_grad(v, alpha)); }, "ual_pow");
    case UalForm::Exp:
      return detail::unary(
          p, [alpha](T v) { return static_cast<T>(phi_exp(v, alpha)); },
          [alpha](T v, T) { return static_cast<T>(phi_exp_grad(v, alpha)); }, "ual_exp");
    case UalForm::None:
      break;
  }
  throw Error("ual: form '" + to_string(form) + "' has no ambiguity map");
}

template <typename T>
Tensor<T> ual(const Tensor<T>& p, UalForm form, double alpha) {
  return mean(ual_map(p, form, alpha));
}

/// Mean of (1 + lambda * Phi_pow^alpha(p)) * BCE with the weight held constant.
template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& p, const Tensor<T>& g, double alpha = 2.0, double lambda = 1.0) {
  Tensor<T> w(p.shape());
  auto P = p.data();
  auto W = w.data();
  for (std::size_t i = 0; i < P.size(); ++i) W[i] = static_cast<T>(1.0 + lambda * phi_pow(P[i], alpha));
  return mean(mul(bce_map(p, g), w));
}

/// Training objective from logits: mean BCE + lambda * mean UAL. The
/// weighted-bce form instead scales each pixel's BCE by 1 + lambda * Phi.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& logits, const Tensor<T>& g, double lambda, const LossConfig& cfg) {
  Tensor<T> per_pixel = bce_logits_map(logits, g);
  if (cfg.form == UalForm::None || lambda == 0.0) return mean(per_pixel);
  if (cfg.form == UalForm::WeightedBce) {
    Tensor<T> w(logits.shape());
    auto Z = logits.data();
    auto W = w.data();
    for (std::size_t i = 0; i < Z.size(); ++i)
      W[i] = static_cast<T>(1.0 + lambda * phi_pow(sigmoid_scalar(Z[i]), cfg.alpha));
    return mean(mul(per_pixel, w));
  }
  return add(mean(per_pixel), scale(ual(sigmoid(logits), cfg.form, cfg.alpha), static_cast<T>(lambda)));
}

}  // namespace znext
