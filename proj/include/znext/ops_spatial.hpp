#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "znext/ops_basic.hpp"

// Spatial primitives over NCHW tensors: convolution, pooling, resizing,
// batch normalization and the circular temporal convolution.

namespace znext {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

namespace detail {

inline void require_rank4(const Shape& s, const char* op, const char* what) {
  if (s.size() != 4)
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4 (NCHW), got " + shape_str(s));
}

// Unfolds channels [c0, c0+cin) of one image into a (cin*kh*kw) x (ho*wo) matrix.
template <typename T>
void im2col(const T* img, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            T* cols) {
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        const T* plane = img + c * h * w;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= H) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = plane + ih * W;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            dst[ow] = (iw < 0 || iw >= W) ? T(0) : src[iw];
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            T* img) {
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        T* plane = img + c * h * w;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          if (ih < 0 || ih >= H) continue;
          T* dst = plane + ih * W;
          const T* src = row + oh * wo;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
}

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo, groups, cin_g, cout_g, stride, pad;
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
  std::size_t krows() const { return cin_g * kh * kw; }
};

}  // namespace detail

/// 2-D cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin/groups,kh,kw],
/// b: optional [Cout] (pass an undefined tensor for none).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Conv2dOptions opt = {}) {
  detail::require_rank4(x.shape(), "conv2d", "input");
  detail::require_rank4(w.shape(), "conv2d", "weight");
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (opt.groups == 0 || x.dim(1) % opt.groups != 0)
    throw ShapeError("conv2d: input channels (dim 1 = " + std::to_string(x.dim(1)) +
                     ") not divisible by groups " + std::to_string(opt.groups));
  if (w.dim(0) % opt.groups != 0)
    throw ShapeError("conv2d: output channels (weight dim 0 = " + std::to_string(w.dim(0)) +
                     ") not divisible by groups " + std::to_string(opt.groups));
  detail::ConvGeom g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.groups = opt.groups;
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  g.stride = opt.stride;
  g.pad = opt.padding;
  if (w.dim(1) != g.cin_g)
    throw ShapeError("conv2d: weight dim 1 is " + std::to_string(w.dim(1)) + ", expected input channels / groups = " +
                     std::to_string(g.cin_g));
  if (g.h + 2 * g.pad < g.kh)
    throw ShapeError("conv2d: kernel height " + std::to_string(g.kh) + " exceeds padded input height " +
                     std::to_string(g.h + 2 * g.pad));
  if (g.w + 2 * g.pad < g.kw)
    throw ShapeError("conv2d: kernel width " + std::to_string(g.kw) + " exceeds padded input width " +
                     std::to_string(g.w + 2 * g.pad));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != g.cout))
    throw ShapeError("conv2d: bias shape " + shape_str(b.shape()) + " does not match Cout " +
                     std::to_string(g.cout));
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  Tensor<T> out(Shape{g.n, g.cout, g.ho, g.wo});
  const std::size_t P = g.ho * g.wo;
  const std::size_t K = g.krows();
  std::vector<T> cols(g.pointwise() ? 0 : K * P);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t gi = 0; gi < g.groups; ++gi) {
      const T* img = x.data().data() + (n * g.cin + gi * g.cin_g) * g.h * g.w;
      const T* colp = img;
      if (!g.pointwise()) {
        detail::im2col(img, g.cin_g, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo, cols.data());
        colp = cols.data();
      }
      detail::CMapMat<T> C(colp, K, P);
      detail::CMapMat<T> Wm(w.data().data() + gi * g.cout_g * K, g.cout_g, K);
      detail::MapMat<T> O(out.data().data() + (n * g.cout + gi * g.cout_g) * P, g.cout_g, P);
      O.noalias() = Wm * C;
      if (b.defined())
        for (std::size_t co = 0; co < g.cout_g; ++co) O.row(co).array() += b.data()[gi * g.cout_g + co];
    }
  detail::check_finite<T>(out.data(), "conv2d");

  if (detail::any_requires_grad<T>({&x, &w, &b})) {
    auto xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr, on = out.node();
    detail::record(out, [xn, wn, bn, on, g] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      auto* gw = detail::grad_of(wn);
      auto* gb = detail::grad_of(bn);
      const std::size_t P = g.ho * g.wo;
      const std::size_t K = g.krows();
      std::vector<T> cols(g.pointwise() ? 0 : K * P);
      std::vector<T> dcols(g.pointwise() ? 0 : K * P);
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t gi = 0; gi < g.groups; ++gi) {
          detail::CMapMat<T> G(on->grad.data() + (n * g.cout + gi * g.cout_g) * P, g.cout_g, P);
          if (gb)
            for (std::size_t co = 0; co < g.cout_g; ++co) {
              // Sequential sum: Eigen's vectorized reduction depends on buffer alignment.
              T acc = T(0);
              for (std::size_t q = 0; q < P; ++q) acc += G(co, q);
              (*gb)[gi * g.cout_g + co] += acc;
            }
          const std::size_t xoff = (n * g.cin + gi * g.cin_g) * g.h * g.w;
          if (gw) {
            const T* colp = xn->data.data() + xoff;
            if (!g.pointwise()) {
              detail::im2col(colp, g.cin_g, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo, cols.data());
              colp = cols.data();
            }
            detail::CMapMat<T> C(colp, K, P);
            detail::MapMat<T> GW(gw->data() + gi * g.cout_g * K, g.cout_g, K);
            GW.noalias() += G * C.transpose();
          }
          if (gx) {
            detail::CMapMat<T> Wm(wn->data.data() + gi * g.cout_g * K, g.cout_g, K);
            if (g.pointwise()) {
              detail::MapMat<T> DX(gx->data() + xoff, K, P);
              DX.noalias() += Wm.transpose() * G;
            } else {
              detail::MapMat<T> DC(dcols.data(), K, P);
              DC.noalias() = Wm.transpose() * G;
              detail::col2im(dcols.data(), g.cin_g, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.ho, g.wo,
                             gx->data() + xoff);
            }
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, Conv2dOptions opt = {}) {
  return conv2d(x, w, Tensor<T>(), opt);
}

enum class PoolMode { Max, Avg };

/// Adaptive pooling: output cell i covers input rows
/// [floor(i*H/oh), ceil((i+1)*H/oh)), columns likewise.
template <typename T>
Tensor<T> adaptive_pool(const Tensor<T>& x, std::size_t oh, std::size_t ow, PoolMode mode) {
  detail::require_rank4(x.shape(), "adaptive_pool", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (oh < 1 || oh > H)
    throw ShapeError("adaptive_pool: output height " + std::to_string(oh) + " outside [1, " +
                     std::to_string(H) + "]");
  if (ow < 1 || ow > W)
    throw ShapeError("adaptive_pool: output width " + std::to_string(ow) + " outside [1, " +
                     std::to_string(W) + "]");
  auto lo = [](std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; };
  auto hi = [](std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; };
  Tensor<T> out(Shape{N, C, oh, ow});
  std::vector<std::uint32_t> argmax(mode == PoolMode::Max ? out.numel() : 0);
  auto X = x.data();
  auto O = out.data();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* plane = X.data() + p * H * W;
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t r0 = lo(i, H, oh), r1 = hi(i, H, oh);
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t c0 = lo(j, W, ow), c1 = hi(j, W, ow);
        const std::size_t o = (p * oh + i) * ow + j;
        if (mode == PoolMode::Max) {
          std::size_t best = r0 * W + c0;
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c)
              if (plane[r * W + c] > plane[best]) best = r * W + c;
          O[o] = plane[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        } else {
          T acc = 0;
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c) acc += plane[r * W + c];
          O[o] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
        }
      }
    }
  }
  detail::check_finite<T>(out.data(), "adaptive_pool");
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on, argmax = std::move(argmax), mode, N, C, H, W, oh, ow, lo, hi] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t p = 0; p < N * C; ++p) {
        T* gplane = gx->data() + p * H * W;
        for (std::size_t i = 0; i < oh; ++i) {
          const std::size_t r0 = lo(i, H, oh), r1 = hi(i, H, oh);
          for (std::size_t j = 0; j < ow; ++j) {
            const std::size_t o = (p * oh + i) * ow + j;
            const T g = on->grad[o];
            if (mode == PoolMode::Max) {
              gplane[argmax[o]] += g;
            } else {
              const std::size_t c0 = lo(j, W, ow), c1 = hi(j, W, ow);
              const T share = g / static_cast<T>((r1 - r0) * (c1 - c0));
              for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) gplane[r * W + c] += share;
            }
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

// Half-pixel-centre sampling taps along one axis.
struct LinearTaps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

inline LinearTaps linear_taps(std::size_t in, std::size_t out) {
  LinearTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    t.i0[i] = i0;
    t.i1[i] = std::min(i0 + 1, in - 1);
    t.w1[i] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace detail

/// Bilinear resize with align_corners = false.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  detail::require_rank4(x.shape(), "bilinear_resize", "input");
  if (oh < 1 || ow < 1) throw ShapeError("bilinear_resize: output size must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto ty = detail::linear_taps(H, oh);
  auto tx = detail::linear_taps(W, ow);
  Tensor<T> out(Shape{N, C, oh, ow});
  auto X = x.data();
  auto O = out.data();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* plane = X.data() + p * H * W;
    for (std::size_t i = 0; i < oh; ++i) {
      const T wy1 = static_cast<T>(ty.w1[i]), wy0 = T(1) - wy1;
      const T* r0 = plane + ty.i0[i] * W;
      const T* r1 = plane + ty.i1[i] * W;
      for (std::size_t j = 0; j < ow; ++j) {
        const T wx1 = static_cast<T>(tx.w1[j]), wx0 = T(1) - wx1;
        const T top = wx0 * r0[tx.i0[j]] + wx1 * r0[tx.i1[j]];
        const T bot = wx0 * r1[tx.i0[j]] + wx1 * r1[tx.i1[j]];
        O[(p * oh + i) * ow + j] = wy0 * top + wy1 * bot;
      }
    }
  }
  detail::check_finite<T>(out.data(), "bilinear_resize");
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on, ty = std::move(ty), tx = std::move(tx), N, C, H, W, oh, ow] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t p = 0; p < N * C; ++p) {
        T* plane = gx->data() + p * H * W;
        for (std::size_t i = 0; i < oh; ++i) {
          const T wy1 = static_cast<T>(ty.w1[i]), wy0 = T(1) - wy1;
          T* r0 = plane + ty.i0[i] * W;
          T* r1 = plane + ty.i1[i] * W;
          for (std::size_t j = 0; j < ow; ++j) {
            const T wx1 = static_cast<T>(tx.w1[j]), wx0 = T(1) - wx1;
            const T g = on->grad[(p * oh + i) * ow + j];
            r0[tx.i0[j]] += wy0 * wx0 * g;
            r0[tx.i1[j]] += wy0 * wx1 * g;
            r1[tx.i0[j]] += wy1 * wx0 * g;
            r1[tx.i1[j]] += wy1 * wx1 * g;
          }
        }
      }
    });
  }
  return out;
}

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over axis 1 of a rank >= 2 tensor. Training mode uses
/// batch statistics and updates the running buffers in place (variance update
/// uses the unbiased estimate); inference uses the running buffers.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions opt = {}) {
  if (x.rank() < 2) throw ShapeError("batchnorm2d: input must have a channel axis");
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.numel() / (N * C);
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var})
    if (p->numel() != C)
      throw ShapeError("batchnorm2d: parameter of shape " + shape_str(p->shape()) +
                       " does not match channel count " + std::to_string(C));
  const std::size_t M = N * S;
  if (M == 0) throw ShapeError("batchnorm2d: channel with zero elements");
  Tensor<T> out(x.shape());
  std::vector<T> mean(C), invstd(C);
  auto X = x.data();
  auto Y = out.data();
  const T eps = static_cast<T>(opt.eps);
  if (opt.training) {
    const T mom = static_cast<T>(opt.momentum);
    for (std::size_t c = 0; c < C; ++c) {
      T acc = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) acc += X[(n * C + c) * S + s];
      const T mu = acc / static_cast<T>(M);
      T var = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const T d = X[(n * C + c) * S + s] - mu;
          var += d * d;
        }
      const T unbiased = M > 1 ? var / static_cast<T>(M - 1) : T(0);
      var /= static_cast<T>(M);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(var + eps);
      running_mean.data()[c] = (T(1) - mom) * running_mean.data()[c] + mom * mu;
      running_var.data()[c] = (T(1) - mom) * running_var.data()[c] + mom * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }
  auto G = gamma.data();
  auto B = beta.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T a = G[c] * invstd[c];
      const T m = mean[c];
      const T bb = B[c];
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (n * C + c) * S + s;
        Y[i] = (X[i] - m) * a + bb;
      }
    }
  detail::check_finite<T>(out.data(), "batchnorm2d");
  if (detail::any_requires_grad<T>({&x, &gamma, &beta})) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    const bool training = opt.training;
    detail::record(out, [xn, gn, bn, on, mean = std::move(mean), invstd = std::move(invstd), N, C, S, M,
                         training] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      auto* gg = detail::grad_of(gn);
      auto* gb = detail::grad_of(bn);
      const auto& X = xn->data;
      const auto& DY = on->grad;
      for (std::size_t c = 0; c < C; ++c) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const std::size_t i = (n * C + c) * S + s;
            sum_dy += DY[i];
            sum_dy_xhat += DY[i] * (X[i] - mean[c]) * invstd[c];
          }
        if (gb) (*gb)[c] += sum_dy;
        if (gg) (*gg)[c] += sum_dy_xhat;
        if (!gx) continue;
        const T a = gn->data[c] * invstd[c];
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const std::size_t i = (n * C + c) * S + s;
            if (training) {
              const T xhat = (X[i] - mean[c]) * invstd[c];
              (*gx)[i] += a * (DY[i] - sum_dy / static_cast<T>(M) - xhat * sum_dy_xhat / static_cast<T>(M));
            } else {
              (*gx)[i] += a * DY[i];
            }
          }
      }
    });
  }
  return out;
}

/// Circular temporal convolution over a clip.
///
/// x: [T,C,H,W] (frame axis first), w: [Cout,C,T,kh,kw] with odd kh, kw and
/// "same" spatial padding. Output frame t = sum_s conv(x[(t+s) mod T], w[:,:,s]).
/// No bias, so an all-zero clip maps to an all-zero clip.
template <typename T>
Tensor<T> temporal_conv_circular(const Tensor<T>& x, const Tensor<T>& w) {
  detail::require_rank4(x.shape(), "temporal_conv_circular", "input");
  if (w.rank() != 5) throw ShapeError("temporal_conv_circular: weight must be rank 5 [Cout,C,T,kh,kw]");
  const std::size_t T_ = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != C)
    throw ShapeError("temporal_conv_circular: weight dim 1 is " + std::to_string(w.dim(1)) +
                     ", input has " + std::to_string(C) + " channels");
  if (w.dim(2) != T_)
    throw ShapeError("temporal_conv_circular: kernel temporal extent " + std::to_string(w.dim(2)) +
                     " does not match clip length " + std::to_string(T_));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("temporal_conv_circular: spatial kernel must be odd");
  const std::size_t ph = kh / 2, pw = kw / 2;
  if (ph != pw) throw ShapeError("temporal_conv_circular: spatial kernel must be square");
  const std::size_t P = H * W, K = C * kh * kw;

  // Per-offset weight matrices W_s: [Co, C*kh*kw].
  auto slice_weights = [=](const std::vector<T>& wv) {
    std::vector<T> ws(T_ * Co * K);
    for (std::size_t s = 0; s < T_; ++s)
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t k = 0; k < kh * kw; ++k)
            ws[(s * Co + co) * K + c * kh * kw + k] = wv[(((co * C + c) * T_ + s) * kh * kw) + k];
    return ws;
  };
  auto unfold_all = [=](const std::vector<T>& xv) {
    std::vector<T> cols(T_ * K * P);
    for (std::size_t t = 0; t < T_; ++t)
      detail::im2col(xv.data() + t * C * P, C, H, W, kh, kw, 1, ph, H, W, cols.data() + t * K * P);
    return cols;
  };

  auto ws = slice_weights(w.values());
  auto cols = unfold_all(x.values());
  Tensor<T> out(Shape{T_, Co, H, W});
  for (std::size_t t = 0; t < T_; ++t) {
    detail::MapMat<T> O(out.data().data() + t * Co * P, Co, P);
    for (std::size_t s = 0; s < T_; ++s) {
      const std::size_t src = (t + s) % T_;
      detail::CMapMat<T> Ws(ws.data() + s * Co * K, Co, K);
      detail::CMapMat<T> Cm(cols.data() + src * K * P, K, P);
      O.noalias() += Ws * Cm;
    }
  }
  detail::check_finite<T>(out.data(), "temporal_conv_circular");
  if (detail::any_requires_grad<T>({&x, &w})) {
    auto xn = x.node(), wn = w.node(), on = out.node();
    detail::record(out, [xn, wn, on, T_, C, H, W, Co, kh, kw, ph, P, K, slice_weights, unfold_all] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      auto* gw = detail::grad_of(wn);
      auto ws = slice_weights(wn->data);
      auto cols = unfold_all(xn->data);
      std::vector<T> dws(gw ? T_ * Co * K : 0);
      std::vector<T> dcols(gx ? T_ * K * P : 0);
      for (std::size_t t = 0; t < T_; ++t) {
        detail::CMapMat<T> G(on->grad.data() + t * Co * P, Co, P);
        for (std::size_t s = 0; s < T_; ++s) {
          const std::size_t src = (t + s) % T_;
          if (gw) {
            detail::CMapMat<T> Cm(cols.data() + src * K * P, K, P);
            detail::MapMat<T> DW(dws.data() + s * Co * K, Co, K);
            DW.noalias() += G * Cm.transpose();
          }
          if (gx) {
            detail::CMapMat<T> Ws(ws.data() + s * Co * K, Co, K);
            detail::MapMat<T> DC(dcols.data() + src * K * P, K, P);
            DC.noalias() += Ws.transpose() * G;
          }
        }
      }
      if (gw)
        for (std::size_t s = 0; s < T_; ++s)
          for (std::size_t co = 0; co < Co; ++co)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t k = 0; k < kh * kw; ++k)
                (*gw)[(((co * C + c) * T_ + s) * kh * kw) + k] += dws[(s * Co + co) * K + c * kh * kw + k];
      if (gx)
        for (std::size_t t = 0; t < T_; ++t)
          detail::col2im(dcols.data() + t * K * P, C, H, W, kh, kw, 1, ph, H, W, gx->data() + t * C * P);
    });
  }
  return out;
}

}  // namespace znext
