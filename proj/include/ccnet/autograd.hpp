#pragma once

// Minimal tape-free reverse-mode differentiation: every Var owns a node that
// remembers its parents and how to push its gradient back into them. The graph
// lives exactly as long as the Vars referencing it.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool wants_grad() const { return requires_grad; }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct mutable access, intended for optimizer updates and test setup.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated by backward(); zeros if none has reached this Var.
  Tensor<T> grad() const {
    if (node_->grad.empty()) return Tensor<T>(node_->value.shape());
    return node_->grad;
  }
  const Tensor<T>* grad_ptr() const { return node_->grad.empty() ? nullptr : &node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Detached copy sharing no graph history.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps an op result, recording parents only when some input needs a gradient.
template <typename T>
Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs,
               std::function<void(Node<T>&)> backward) {
  Var<T> out(std::move(value), false);
  if (!grad_mode_flag()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  Node<T>* node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
  node->backward = std::move(backward);
  return out;
}

template <typename T>
Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
               std::function<void(Node<T>&)> backward) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

/// True when the parent slot exists and should receive a gradient.
template <typename T>
bool needs_grad(const std::shared_ptr<Node<T>>& p) {
  return p && p->requires_grad;
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.size() != 1) throw DimensionError("backward() requires a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace ccnet
