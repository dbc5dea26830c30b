#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "znext/tensor.hpp"

// Elementwise, broadcast, reduction, layout and matrix primitives.

namespace znext {

namespace detail {

// Broadcast iteration plan over (at most) collapsed dimensions.
struct BroadcastPlan {
  std::vector<std::size_t> dims;      // collapsed output dims
  std::vector<std::size_t> a_stride;  // 0 where a broadcasts
  std::vector<std::size_t> b_stride;
  Shape out_shape;
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  const std::size_t r = a.size();
  BroadcastPlan p;
  p.out_shape.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(i) + " mismatch (" +
                       std::to_string(a[i]) + " vs " + std::to_string(b[i]) + ")");
    p.out_shape[i] = std::max(a[i], b[i]);
  }
  // Collapse runs of dims sharing the same (a broadcasts, b broadcasts) pattern.
  std::vector<std::size_t> dims;
  std::vector<std::array<bool, 2>> pat;
  for (std::size_t i = 0; i < r; ++i) {
    if (p.out_shape[i] == 1) continue;
    std::array<bool, 2> cur{a[i] == 1, b[i] == 1};
    if (!dims.empty() && pat.back() == cur) {
      dims.back() *= p.out_shape[i];
    } else {
      dims.push_back(p.out_shape[i]);
      pat.push_back(cur);
    }
  }
  if (dims.empty()) {
    dims.push_back(1);
    pat.push_back({false, false});
  }
  const std::size_t k = dims.size();
  p.dims = dims;
  p.a_stride.assign(k, 0);
  p.b_stride.assign(k, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = k; i-- > 0;) {
    if (!pat[i][0]) {
      p.a_stride[i] = sa;
      sa *= dims[i];
    }
    if (!pat[i][1]) {
      p.b_stride[i] = sb;
      sb *= dims[i];
    }
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t k = p.dims.size();
  const std::size_t inner = p.dims[k - 1];
  const std::size_t as = p.a_stride[k - 1], bs = p.b_stride[k - 1];
  std::size_t outer = 1;
  for (std::size_t i = 0; i + 1 < k; ++i) outer *= p.dims[i];
  std::vector<std::size_t> idx(k, 0);
  std::size_t o = 0;
  for (std::size_t q = 0; q < outer; ++q) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      ia += idx[i] * p.a_stride[i];
      ib += idx[i] * p.b_stride[i];
    }
    for (std::size_t j = 0; j < inner; ++j, ++o) f(o, ia + j * as, ib + j * bs);
    for (std::size_t i = k - 1; i-- > 0;) {
      if (++idx[i] < p.dims[i]) break;
      idx[i] = 0;
    }
  }
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Tensor<T> out(plan.out_shape);
  auto A = a.data();
  auto B = b.data();
  auto O = out.data();
  switch (kind) {
    case BinaryKind::Add:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { O[o] = A[i] + B[j]; });
      break;
    case BinaryKind::Sub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { O[o] = A[i] - B[j]; });
      break;
    case BinaryKind::Mul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { O[o] = A[i] * B[j]; });
      break;
  }
  check_finite<T>(out.data(), name);
  if (any_requires_grad<T>({&a, &b})) {
    auto an = a.node(), bn = b.node(), on = out.node();
    record(out, [an, bn, on, plan, kind] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      auto* ga = grad_of(an);
      auto* gb = grad_of(bn);
      const auto& A = an->data;
      const auto& B = bn->data;
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
        switch (kind) {
          case BinaryKind::Add:
            if (ga) (*ga)[i] += G[o];
            if (gb) (*gb)[j] += G[o];
            break;
          case BinaryKind::Sub:
            if (ga) (*ga)[i] += G[o];
            if (gb) (*gb)[j] -= G[o];
            break;
          case BinaryKind::Mul:
            if (ga) (*ga)[i] += G[o] * B[j];
            if (gb) (*gb)[j] += G[o] * A[i];
            break;
        }
      });
    });
  }
  return out;
}

// Unary elementwise op with derivative expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv, const char* name) {
  Tensor<T> out(x.shape());
  auto X = x.data();
  auto Y = out.data();
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = fwd(X[i]);
  check_finite<T>(out.data(), name);
  if (any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    record(out, [xn, on, deriv] {
      if (on->grad.empty()) return;
      auto* gx = grad_of(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        (*gx)[i] += on->grad[i] * deriv(xn->data[i], on->data[i]);
    });
  }
  return out;
}

inline std::size_t normalize_axis(long axis, std::size_t rank, const char* op) {
  long r = static_cast<long>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return static_cast<std::size_t>(axis);
}

// outer x axis x inner decomposition of a shape around `axis`.
inline std::array<std::size_t, 3> split_dims(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::Mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; }, "scale");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v + s; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); },
      "relu");
}

template <typename T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

/// Identity in the forward pass; multiplies the incoming gradient by
/// `factor`. Only used to fault-inject the gradcheck harness.
template <typename T>
Tensor<T> corrupt_grad(const Tensor<T>& x, T factor) {
  return detail::unary(
      x, [](T v) { return v; }, [factor](T, T) { return factor; }, "corrupt_grad");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  detail::check_finite<T>(out.data(), "sum");
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (auto& g : *gx) g += on->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Sum over one axis; the axis is removed from the shape (kept as size 1
/// when the result would otherwise be rank 0).
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, long axis_in) {
  const auto axis = detail::normalize_axis(axis_in, x.rank(), "sum_axis");
  auto [outer, n, inner] = detail::split_dims(x.shape(), axis);
  Shape os;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) os.push_back(x.dim(i));
  if (os.empty()) os.push_back(1);
  Tensor<T> out(os);
  auto X = x.data();
  auto O = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i) O[o * inner + i] += X[(o * n + k) * inner + i];
  detail::check_finite<T>(out.data(), "sum_axis");
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on, outer = outer, n = n, inner = inner] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t i = 0; i < inner; ++i)
            (*gx)[(o * n + k) * inner + i] += on->grad[o * inner + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), x.values());
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, long axis_in) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const auto axis = detail::normalize_axis(axis_in, xs[0].rank(), "concat");
  Shape os = xs[0].shape();
  os[axis] = 0;
  for (const auto& x : xs) {
    if (x.rank() != os.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < os.size(); ++i)
      if (i != axis && x.dim(i) != os[i])
        throw ShapeError("concat: dimension " + std::to_string(i) + " mismatch (" +
                         std::to_string(x.dim(i)) + " vs " + std::to_string(os[i]) + ")");
    os[axis] += x.dim(axis);
  }
  Tensor<T> out(os);
  auto [outer, total, inner] = detail::split_dims(os, axis);
  auto O = out.data();
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t n = x.dim(axis);
    auto X = x.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(X.begin() + o * n * inner, n * inner, O.begin() + (o * total + off) * inner);
    off += n;
  }
  bool track = false;
  if (grad_enabled())
    for (const auto& x : xs) track = track || x.requires_grad();
  if (track) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    auto on = out.node();
    detail::record(out, [nodes, offsets, on, outer = outer, total = total, inner = inner, axis] {
      if (on->grad.empty()) return;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto* gx = detail::grad_of(nodes[k]);
        if (!gx) continue;
        const std::size_t n = nodes[k]->shape[axis];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < n * inner; ++i)
            (*gx)[o * n * inner + i] += on->grad[(o * total + offsets[k]) * inner + i];
      }
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, long axis_in, const std::vector<std::size_t>& sizes) {
  const auto axis = detail::normalize_axis(axis_in, x.rank(), "split");
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != x.dim(axis))
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but dimension " +
                     std::to_string(axis) + " is " + std::to_string(x.dim(axis)));
  auto [outer, n_all, inner] = detail::split_dims(x.shape(), axis);
  std::vector<Tensor<T>> outs;
  std::size_t off = 0;
  auto X = x.data();
  const bool track = detail::any_requires_grad<T>({&x});
  for (auto n : sizes) {
    Shape os = x.shape();
    os[axis] = n;
    Tensor<T> out(os);
    auto O = out.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(X.begin() + (o * n_all + off) * inner, n * inner, O.begin() + o * n * inner);
    if (track) {
      auto xn = x.node(), on = out.node();
      detail::record(out, [xn, on, off, n, outer = outer, n_all = n_all, inner = inner] {
        if (on->grad.empty()) return;
        auto* gx = detail::grad_of(xn);
        if (!gx) return;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < n * inner; ++i)
            (*gx)[(o * n_all + off) * inner + i] += on->grad[o * n * inner + i];
      });
    }
    outs.push_back(std::move(out));
    off += n;
  }
  return outs;
}

/// Equal-size split into `parts` chunks.
template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& x, long axis_in, std::size_t parts) {
  const auto axis = detail::normalize_axis(axis_in, x.rank(), "chunk");
  if (parts == 0 || x.dim(axis) % parts != 0)
    throw ShapeError("chunk: dimension " + std::to_string(x.dim(axis)) + " not divisible into " +
                     std::to_string(parts) + " parts");
  return split(x, axis_in, std::vector<std::size_t>(parts, x.dim(axis) / parts));
}

/// Swaps the last two dimensions.
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2");
  Shape os = x.shape();
  const std::size_t r = os.size();
  const std::size_t m = os[r - 2], n = os[r - 1];
  std::swap(os[r - 2], os[r - 1]);
  const std::size_t batch = x.numel() / (m * n);
  Tensor<T> out(os);
  auto X = x.data();
  auto O = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) O[b * m * n + j * m + i] = X[b * m * n + i * n + j];
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on, batch, m, n] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            (*gx)[b * m * n + i * n + j] += on->grad[b * m * n + j * m + i];
    });
  }
  return out;
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

}  // namespace detail

/// Matrix product over the last two dims. a: [B,m,k] or [m,k]; b: [B,k,n] or
/// [k,n]. A rank-2 operand is shared across the batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3)
    throw ShapeError("matmul: operands must be rank 2 or 3");
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  if (k != k2)
    throw ShapeError("matmul: inner dimension mismatch (" + std::to_string(k) + " vs " +
                     std::to_string(k2) + ")");
  const std::size_t ba = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t bb = b.rank() == 3 ? b.dim(0) : 1;
  if (ba != bb && ba != 1 && bb != 1)
    throw ShapeError("matmul: batch dimension mismatch (" + std::to_string(ba) + " vs " +
                     std::to_string(bb) + ")");
  const std::size_t batch = std::max(ba, bb);
  Shape os = (a.rank() == 3 || b.rank() == 3) ? Shape{batch, m, n} : Shape{m, n};
  Tensor<T> out(os);
  const std::size_t sa = ba == 1 ? 0 : m * k, sb = bb == 1 ? 0 : k * n;
  for (std::size_t i = 0; i < batch; ++i) {
    detail::CMapMat<T> A(a.data().data() + i * sa, m, k);
    detail::CMapMat<T> B(b.data().data() + i * sb, k, n);
    detail::MapMat<T> O(out.data().data() + i * m * n, m, n);
    O.noalias() = A * B;
  }
  detail::check_finite<T>(out.data(), "matmul");
  if (detail::any_requires_grad<T>({&a, &b})) {
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, [an, bn, on, batch, m, k, n, sa, sb] {
      if (on->grad.empty()) return;
      auto* ga = detail::grad_of(an);
      auto* gb = detail::grad_of(bn);
      for (std::size_t i = 0; i < batch; ++i) {
        detail::CMapMat<T> G(on->grad.data() + i * m * n, m, n);
        if (ga) {
          detail::CMapMat<T> B(bn->data.data() + i * sb, k, n);
          detail::MapMat<T> GA(ga->data() + i * sa, m, k);
          GA.noalias() += G * B.transpose();
        }
        if (gb) {
          detail::CMapMat<T> A(an->data.data() + i * sa, m, k);
          detail::MapMat<T> GB(gb->data() + i * sb, k, n);
          GB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, long axis_in) {
  const auto axis = detail::normalize_axis(axis_in, x.rank(), "softmax");
  auto [outer, n, inner] = detail::split_dims(x.shape(), axis);
  Tensor<T> out(x.shape());
  auto X = x.data();
  auto Y = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mx = X[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, X[base + k * inner]);
      T z = 0;
      for (std::size_t k = 0; k < n; ++k) {
        T e = std::exp(X[base + k * inner] - mx);
        Y[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) Y[base + k * inner] /= z;
    }
  detail::check_finite<T>(out.data(), "softmax");
  if (detail::any_requires_grad<T>({&x})) {
    auto xn = x.node(), on = out.node();
    detail::record(out, [xn, on, outer = outer, n = n, inner = inner] {
      if (on->grad.empty()) return;
      auto* gx = detail::grad_of(xn);
      if (!gx) return;
      const auto& Y = on->data;
      const auto& G = on->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          T dot = 0;
          for (std::size_t k = 0; k < n; ++k) dot += G[base + k * inner] * Y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k)
            (*gx)[base + k * inner] += Y[base + k * inner] * (G[base + k * inner] - dot);
        }
    });
  }
  return out;
}

/// Cyclic shift along axis 0: output frame t is input frame (t + 1) mod T.
template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& x) {
  const std::size_t t = x.dim(0);
  if (t == 1) return x;
  auto parts = split(x, 0, {1, t - 1});
  return concat(std::vector<Tensor<T>>{parts[1], parts[0]}, 0);
}

}  // namespace znext
