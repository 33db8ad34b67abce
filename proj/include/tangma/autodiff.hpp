#pragma once

// Reverse-mode automatic differentiation over a define-by-run tape.
//
// Every operation returns a Var that owns its forward value and holds strong
// references to its inputs plus a backward rule. The graph lives exactly as
// long as the Var at its root; leaves (parameters) persist across steps and
// accumulate gradients until zero_grads() is called.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tangma/tensor.hpp"

namespace tangma {

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_rule;

  bool is_leaf() const noexcept { return inputs.empty(); }

  std::span<T> grad_buffer() {
    if (grad.size() != value.numel()) grad.assign(value.numel(), T{0});
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// A graph leaf. Trainable parameters are leaves with requires_grad set.
  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return leaf(std::move(value), true); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  const std::string& op() const { return node_->op; }

  /// Gradient accumulated by backward(); empty if none has reached this node.
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.numel(); }

  /// In-place access for optimizers; only legal on leaves.
  std::span<T> mutable_value() {
    if (!is_leaf()) throw ContractError("mutable_value() on non-leaf node '" + node_->op + "'");
    return node_->value.mutable_data();
  }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. The backward rule and input references are kept only
/// when some input needs a gradient, so no-grad evaluation builds no graph.
template <typename T>
Var<T> make_result(std::string op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_rule) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  if (detail::grad_enabled())
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_rule = std::move(backward_rule);
  }
  return Var<T>(std::move(node));
}

namespace detail {

// Reverse topological order of the grad-requiring subgraph under root.
template <typename T>
std::vector<Node<T>*> reverse_topological(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace detail

/// Populates d(root)/d(node) for every reachable node that requires a
/// gradient. Leaf gradients accumulate across calls; interior gradients are
/// recomputed from zero on each call.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw ContractError("backward() on an undefined Var");
  if (root.numel() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  auto order = detail::reverse_topological(&root.node());
  for (Node<T>* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.numel(), T{0});
  }
  root.node().grad_buffer()[0] += T{1};
  for (Node<T>* node : order) {
    if (node->backward_rule) node->backward_rule(*node);
  }
}

template <typename T>
void zero_grads(std::span<const Var<T>> params) {
  for (const auto& p : params) {
    auto& g = p.node().grad;
    std::fill(g.begin(), g.end(), T{0});
  }
}

template <typename T>
void zero_grads(const std::vector<Var<T>>& params) {
  zero_grads(std::span<const Var<T>>(params));
}

}  // namespace tangma
