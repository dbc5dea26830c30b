#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace znext {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or argument contract violated by a caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced during a forward or backward step.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing file, corrupted payload.
class DataError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<TensorNode<T>>()) {
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<TensorNode<T>>()) {
    if (values.size() != shape_numel(shape))
      throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(shape));
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  // NCHW element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const auto& s = node_->shape;
    return node_->data[((n * s[1] + c) * s[2] + h) * s[3] + w];
  }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = node_->shape;
    return node_->data[((n * s[1] + c) * s[2] + h) * s[3] + w];
  }

  /// Copy of the values without gradient tracking.
  Tensor detach() const { return Tensor(node_->shape, node_->data); }

  bool same_node(const Tensor& o) const { return node_ == o.node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] == y[i])) return false;
  return true;
}

namespace detail {

inline thread_local bool grad_enabled = true;

template <typename T>
void check_finite(std::span<const T> v, const char* where) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NumericalError(std::string("non-finite value at flat index ") + std::to_string(i) +
                           " in " + where);
}

}  // namespace detail

/// Disables tape recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

/// Ordered record of executed differentiable ops for one thread.
///
/// Entries are appended in execution order, so every entry's inputs were
/// produced by earlier entries (or are leaves). backward() walks the record in
/// reverse once and then clears it.
template <typename T>
class Tape {
 public:
  static Tape& active() {
    thread_local Tape tape;
    return tape;
  }

  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ShapeError("backward() on a loss that is not on the tape");
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  std::vector<std::function<void()>> entries_;
};

template <typename T>
void backward(Tensor<T>& loss) {
  Tape<T>::active().backward(loss);
}

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> xs) {
  if (!grad_enabled) return false;
  for (auto* x : xs)
    if (x && x->defined() && x->requires_grad()) return true;
  return false;
}

/// Marks `out` as tape-tracked and records `fn`. `fn` runs once during
/// backward with out's grad populated.
template <typename T, typename Fn>
void record(Tensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  Tape<T>::active().record(std::forward<Fn>(fn));
}

template <typename T>
std::vector<T>* grad_of(const std::shared_ptr<TensorNode<T>>& n) {
  if (!n || !n->requires_grad) return nullptr;
  n->ensure_grad();
  return &n->grad;
}

}  // namespace detail

}  // namespace znext
