#include "wavray/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace wavray {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("zero extent in shape " + str());
  }
}

std::size_t Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
bool g_finite_checks = false;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
  return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::ones(const Shape& shape) {
  return full(shape, T(1));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data.assign(shape.numel(), value);
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> values) {
  if (values.size() != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), impl_->data);
}

template <typename T>
Tensor<T> make_result(const std::string& op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward) {
  if (data.size() != shape.numel()) {
    throw ShapeError(op + ": produced " + std::to_string(data.size()) + " values for shape " +
                     shape.str());
  }
  if (g_finite_checks) {
    for (T v : data) {
      if (!std::isfinite(v)) throw ValueError(op + ": non-finite value in result");
    }
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);

  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || (in.defined() && in.requires_grad());
  }
  if (needs_grad) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    for (auto& in : inputs) {
      if (in.defined()) node->inputs.push_back(in.impl());
    }
    node->backward = std::move(backward);
    impl->node = std::move(node);
    impl->requires_grad = true;
  }
  return Tensor<T>(std::move(impl));
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  tape.root_ = root.impl();
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::unordered_set<const TensorImpl<T>*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl<T>>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->node.get();
    if (node != nullptr && next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    tape.order_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
std::vector<std::string> Tape<T>::ops() const {
  std::vector<std::string> names;
  for (const auto& impl : order_) names.push_back(impl->node ? impl->node->op : "leaf");
  return names;
}

template <typename T>
void Tape<T>::backward() {
  if (root_->data.size() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " + root_->shape.str());
  }
  if (!root_->requires_grad) {
    throw AutodiffError("loss is detached: it does not depend on any tensor requiring grad");
  }
  // Intermediate buffers start fresh on every pass; leaves keep accumulating.
  for (const auto& impl : order_) {
    if (impl->node) {
      impl->grad.assign(impl->data.size(), T(0));
    } else {
      impl->ensure_grad();
    }
  }
  root_->grad[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& impl = *it;
    if (!impl->node) continue;
    for (auto& in : impl->node->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    impl->node->backward(*impl);
    if (impl != root_) {
      impl->grad.clear();
      impl->grad.shrink_to_fit();
    }
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>::record(loss).backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(const std::string&, Shape, std::vector<float>,
                                   std::vector<Tensor<float>>, BackwardFn<float>);
template Tensor<double> make_result(const std::string&, Shape, std::vector<double>,
                                    std::vector<Tensor<double>>, BackwardFn<double>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace wavray
