#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "unode/core/error.hpp"

namespace unode {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <std::floating_point T>
class Tensor;

namespace detail {
inline bool& grad_mode_flag() noexcept {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() noexcept { return detail::grad_mode_flag(); }

/// Scoped inference mode: ops record no graph while alive.
class NoGradGuard {
 public:
  NoGradGuard() noexcept : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

}  // namespace detail

/// Row-major n-d array with optional reverse-mode gradient tracking. Copies share storage;
/// results of differentiable ops remember their parents until the graph is dropped.
template <std::floating_point T = float>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      fail_usage("Tensor: shape " + shape_str(shape) + " does not match " +
                 std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return from({}, {value}, requires_grad); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->data; }
  /// Direct write access; meant for parameter updates and initialization only.
  std::span<T> mutable_data() { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T{0}); }

  T item() const {
    if (numel() != 1) fail_usage("Tensor::item on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  T at(std::size_t row, std::size_t col) const { return node_->data[row * node_->shape.at(1) + col]; }

  /// Same values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->data, false); }

  const NodePtr& node() const noexcept { return node_; }

  /// Builds an op result. Parents that do not require grad are dropped from the graph.
  static Tensor make_result(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                            std::function<void(detail::Node<T>&)> backward_fn) {
    Tensor out = from(std::move(shape), std::move(values), false);
    bool any = false;
    if (grad_enabled()) {
      for (const auto& p : parents) any = any || p.requires_grad();
    }
    if (any) {
      out.node_->requires_grad = true;
      out.node_->is_leaf = false;
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  NodePtr node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; interior gradients
/// are recomputed on every call.
template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) fail_usage("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) return;

  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order) {
    if (!node->is_leaf) node->grad.assign(node->data.size(), T{0});
  }
  loss.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->is_leaf && node->backward_fn) node->backward_fn(*node);
  }
}

template <std::floating_point T>
void zero_grad(std::span<Tensor<T>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace unode
