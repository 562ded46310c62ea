#pragma once

// Minimal reverse-mode autodiff over dense row-major tensors.
//
// A Tensor is a shared handle to a graph node. Ops build new nodes that keep
// their parents alive; calling backward() on a scalar walks the graph in
// reverse topological order and accumulates gradients into every node that
// requires them. Everything is templated on the scalar type and explicitly
// instantiated for float (training) and double (gradient checks).

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace spgraph::nn {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  T* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  // Empty span until a backward pass reached this node.
  std::span<const T> grad() const { return node_->grad; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.clear(); }

  // Seeds d(this)/d(this) = 1; this must hold exactly one element.
  void backward() const;
  // Copy of the values with no history.
  Tensor detach() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive, ops on this thread record no history (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. requires_grad is inherited from the parents; when no
// parent requires a gradient the backward closure is dropped.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Named trainable tensor. Names are unique within a model.
using Parameter = NamedTensor<float>;

}  // namespace spgraph::nn
