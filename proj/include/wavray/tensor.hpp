#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavray {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or invalid tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (out-of-range label, bad axis, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Failures of the reverse pass itself (non-scalar loss, detached graph).
class AutodiffError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// ---------------------------------------------------------------------------
// Graph storage
// ---------------------------------------------------------------------------

template <typename T>
struct Node;

/// Storage behind a Tensor handle. Op results are never mutated after the op
/// returns; only leaves (parameters) are updated in place by optimizers.
template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;  // null for leaves

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// Backward rule of one recorded op. The rule reads the output's value and
/// gradient and accumulates into the inputs' grad buffers.
template <typename T>
using BackwardFn = std::function<void(const TensorImpl<T>& out)>;

template <typename T>
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  BackwardFn<T> backward;
};

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

/// Dense row-major tensor with optional gradient tracking. Copies of a handle
/// alias the same storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, T value);
  static Tensor from(const Shape& shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape[axis]; }

  std::span<const T> data() const { return impl_->data; }
  /// Writable view; only meaningful on leaves (parameters, inputs).
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T operator[](std::size_t flat) const { return impl_->data[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  void zero_grad();

  /// Value copy with no graph history.
  Tensor detach() const;
  std::vector<T> to_vector() const { return impl_->data; }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Recording and the reverse pass
// ---------------------------------------------------------------------------

/// Whether ops currently record backward nodes (thread-local).
bool grad_enabled();

/// Disables recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When on, every op result is scanned for NaN/Inf and a ValueError is raised
/// naming the op. Off by default.
void set_finite_checks(bool on);
bool finite_checks();

/// Builds an op result. A backward node is attached only when recording is on
/// and at least one input requires grad.
template <typename T>
Tensor<T> make_result(const std::string& op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward);

/// Topologically ordered record of the nodes reachable from a root.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return order_.size(); }
  /// Op names in recording order (inputs before consumers).
  std::vector<std::string> ops() const;

  /// Seeds d(root)/d(root) = 1 and runs every backward rule exactly once in
  /// reverse order. Leaf gradients accumulate across calls.
  void backward();

 private:
  std::shared_ptr<TensorImpl<T>> root_;
  std::vector<std::shared_ptr<TensorImpl<T>>> order_;
};

namespace detail {

/// Gradient buffer of an op input, allocated on first use; null when the input
/// does not take part in differentiation.
template <typename T>
T* grad_buffer(const std::shared_ptr<TensorImpl<T>>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

}  // namespace detail

/// Reverse pass from a scalar loss.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace wavray
