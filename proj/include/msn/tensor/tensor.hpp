#pragma once

// Dense tensor handle with a reverse-mode gradient tape.
//
// A Tensor is a shared handle onto a tape node.  Every operation in ops.hpp
// creates a new node whose parents were created earlier, so node ids give a
// topological order for free.  backward() replays the reachable part of the
// tape in reverse id order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "msn/core/error.hpp"

namespace msn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scale,
  gelu,
  exp,
  log,
  square,
  matmul,
  sum,
  mean,
  reshape,
  softmax,
  layer_norm,
  embedding,
  concat,
  broadcast_steps,
  split_heads,
  merge_heads,
  straight_through,
  cross_entropy,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::gelu: return "gelu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::matmul: return "matmul";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::reshape: return "reshape";
    case OpKind::softmax: return "softmax";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::embedding: return "embedding";
    case OpKind::concat: return "concat";
    case OpKind::broadcast_steps: return "broadcast_steps";
    case OpKind::split_heads: return "split_heads";
    case OpKind::merge_heads: return "merge_heads";
    case OpKind::straight_through: return "straight_through";
    case OpKind::cross_entropy: return "cross_entropy";
  }
  return "unknown";
}

namespace detail {

inline std::atomic<std::uint64_t> next_node_id{0};
inline thread_local bool grad_enabled = true;
inline std::atomic<bool> finite_checks{false};

template <class T>
struct Node {
  std::uint64_t id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  OpKind kind = OpKind::leaf;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool meta = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

// Debug switch: when on, every op verifies its output is finite and throws
// NumericFault otherwise.
inline void set_finite_checks(bool on) { detail::finite_checks.store(on); }
inline bool finite_checks_enabled() { return detail::finite_checks.load(); }

inline bool grad_mode() { return detail::grad_enabled; }

class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct TapeRecord {
  std::uint64_t id;
  OpKind kind;
  std::vector<std::uint64_t> parents;
};

template <class T = float>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  // Shape-only tensor with no storage; used to describe models too large to
  // materialize (parameter manifests).
  static Tensor meta(Shape shape) {
    auto node = std::make_shared<NodeT>();
    node->shape = std::move(shape);
    node->meta = true;
    return Tensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  bool is_meta() const { return node_->meta; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return shape_numel(node_->shape); }

  std::span<const T> data() const { return node_->value; }
  // Direct write access for optimizers, initializers and tests.  Writing to a
  // tensor that already has recorded consumers invalidates their gradients.
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  T at(std::size_t flat) const { return node_->value.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::vector<T>& grad_storage() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }
  OpKind op() const { return node_->kind; }
  NodeT& node() const { return *node_; }
  const std::shared_ptr<NodeT>& node_ptr() const { return node_; }

  Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

  void backward() const;

  // Reachable tape in topological (creation) order.
  std::vector<TapeRecord<T>> tape() const;

 private:
  std::vector<NodeT*> reachable_() const;

  std::shared_ptr<NodeT> node_;
};

template <class T>
std::vector<detail::Node<T>*> Tensor<T>::reachable_() const {
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<NodeT*> stack{node_.get()};
  while (!stack.empty()) {
    NodeT* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](NodeT* a, NodeT* b) { return a->id > b->id; });
  return order;
}

template <class T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;
  auto order = reachable_();
  for (NodeT* n : order) {
    if (n->backward) {
      n->grad.assign(n->value.size(), T(0));
    } else if (n->grad.empty()) {
      n->grad.assign(n->value.size(), T(0));
    }
  }
  node_->grad[0] += T(1);
  for (NodeT* n : order) {
    if (n->backward) n->backward(*n);
  }
}

template <class T>
std::vector<TapeRecord<T>> Tensor<T>::tape() const {
  auto order = reachable_();
  std::vector<TapeRecord<T>> out;
  out.reserve(order.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TapeRecord<T> rec{(*it)->id, (*it)->kind, {}};
    for (auto& p : (*it)->parents) rec.parents.push_back(p->id);
    out.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

template <class T>
void check_finite(const Node<T>& n) {
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    if (!std::isfinite(static_cast<double>(n.value[i]))) {
      throw NumericFault(std::string(op_name(n.kind)) + " produced a non-finite value at element " +
                         std::to_string(i));
    }
  }
}

// Creates the output node of an op.  The backward closure is recorded only
// when grad mode is on and some input requires a gradient.
template <class T>
Tensor<T> make_op(OpKind kind, Shape shape, std::vector<T> value,
                  std::initializer_list<const Tensor<T>*> inputs,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->kind = kind;
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (finite_checks.load(std::memory_order_relaxed)) check_finite(*n);
  bool any = false;
  for (auto* t : inputs) any = any || t->requires_grad();
  if (grad_enabled && any) {
    n->requires_grad = true;
    for (auto* t : inputs) n->parents.push_back(t->node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

template <class T>
std::vector<T>* grad_target(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? &p.grad : nullptr;
}

}  // namespace detail

}  // namespace msn
