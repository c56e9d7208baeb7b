#pragma once

// Reverse-mode differentiable dense tensor.
//
// Every op builds a Node holding its output values and a closure that pushes
// the output gradient into the parents. Tensor is a cheap shared handle.
// Values are never modified after construction except for leaf parameters,
// which the optimizer updates in place between forward passes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace piunet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Shape contiguous_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * shape[i + 1];
  }
  return strides;
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool& finite_check_mode() {
#ifdef NDEBUG
  thread_local bool enabled = false;
#else
  thread_local bool enabled = true;
#endif
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// NaN/Inf detection on every op output. On by default in debug builds.
inline void set_finite_checks(bool on) { detail::finite_check_mode() = on; }
inline bool finite_checks() { return detail::finite_check_mode(); }

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool on) : prev_(finite_checks()) { set_finite_checks(on); }
  ~FiniteCheckScope() { set_finite_checks(prev_); }
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    }
    for (auto d : shape) {
      if (d < 0) throw ShapeError("tensor: negative extent in " + shape_str(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }
  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }
  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
  std::int64_t dim(std::int64_t axis) const {
    if (axis < 0) axis += rank();
    return node_->shape.at(static_cast<std::size_t>(axis));
  }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  /// In-place access for leaf parameters (optimizer, initialization).
  std::span<T> mutable_values() {
    if (!node_->is_leaf()) throw Error("mutable_values: only leaf tensors may be modified");
    return node_->value;
  }
  const std::vector<T>& vec() const { return node_->value; }
  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw Error("set_requires_grad: only leaf tensors");
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient after backward(); zeros if nothing flowed here.
  std::vector<T> grad() const {
    if (node_->grad.empty()) return std::vector<T>(node_->value.size(), T(0));
    return node_->grad;
  }
  std::span<const T> grad_view() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const { return from(shape(), node_->value, false); }

  /// Reverse pass from a scalar. Intermediate gradients and saved state are
  /// released as they are consumed, so backward may run once per graph.
  void backward() const {
    if (numel() != 1) {
      throw ShapeError("backward: output must be scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;
    std::vector<NodePtr> order;
    topo_order(order);
    node_->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = it->get();
      if (n->is_leaf()) continue;
      if (!n->grad.empty()) n->backward(*n);
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }

  Node<T>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  void topo_order(std::vector<NodePtr>& order) const {
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(node_, 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        const NodePtr& p = n->parents[next++];
        if (p->requires_grad && !seen.count(p.get())) {
          seen.insert(p.get());
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  NodePtr node_;
};

namespace detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NonFiniteError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

/// Wraps an op result. The closure reads self.grad and accumulates into
/// self.parents[i]->grad_buffer(); it is dropped when no input needs a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
  if (finite_checks()) check_finite(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

}  // namespace piunet
