#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "plural/rng.hpp"

namespace plural {

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<Tensor<T>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense n-dimensional array with optional reverse-mode gradient tracking.
/// Value-semantic handle to shared storage; ops build a tape of backward
/// closures that backward() replays in reverse topological order.
template <typename T>
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : node_(std::make_shared<TensorNode<T>>()) {
    node_->shape = std::move(shape);
    node_->data.assign(node_->numel(), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : node_(std::make_shared<TensorNode<T>>()) {
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    if (node_->numel() != node_->data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(node_->shape) +
                                  " does not match data length " +
                                  std::to_string(node_->data.size()));
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor scalar(T v) { return Tensor({std::size_t{1}}, v); }

  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = static_cast<T>(rng.normal(0.0, static_cast<double>(stddev)));
    return t;
  }

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }

  T item() const {
    if (numel() != 1)
      throw std::invalid_argument("item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool is_leaf() const { return !node_->backward_fn; }

  void zero_grad() {
    node_->grad.assign(node_->data.size(), T(0));
  }

  // 2-D accessor
  T& at(std::size_t r, std::size_t c) { return node_->data[r * node_->shape[1] + c]; }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * node_->shape[1] + c]; }

  /// Deep copy of shape+data (no graph, no grad).
  Tensor copy() const {
    Tensor t(node_->shape, node_->data);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  TensorNode<T>& node() { return *node_; }
  const TensorNode<T>& node() const { return *node_; }
  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
void topo_visit(const std::shared_ptr<TensorNode<T>>& root,
                std::vector<std::shared_ptr<TensorNode<T>>>& order) {
  // Iterative DFS post-order; recursion would overflow on deep tapes.
  std::unordered_set<const TensorNode<T>*> seen;
  std::vector<std::pair<std::shared_ptr<TensorNode<T>>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      auto parent = node->parents[idx++].node_ptr();
      if (!seen.count(parent.get())) {
        seen.insert(parent.get());
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Populates .grad on every reachable
/// tensor with requires_grad, accumulating across shared subexpressions.
/// The tape (parent links + closures) is freed afterwards; leaf grads stay.
template <typename T>
void backward(Tensor<T> loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: seed must be scalar, got " + shape_str(loss.shape()));
  std::vector<std::shared_ptr<TensorNode<T>>> order;
  detail::topo_visit(loss.node_ptr(), order);

  for (auto& n : order)
    if (n->requires_grad) n->ensure_grad();
  if (loss.node().requires_grad) loss.grad()[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = **it;
    if (n.backward_fn && n.requires_grad) n.backward_fn(n);
  }
  // Free the tape: interior grads and graph edges die here.
  for (auto& n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace plural
