#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ynet/error.hpp"

namespace ynet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Thread-local switch for graph recording. Inference paths disable it so no
// backward closures (and no retained activations) are created.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backward;

  // Lazily allocated gradient buffer of the same size as data.
  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

// Reference-counted handle to a node of the compute graph. Copies alias the
// same storage; use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Builds an op result. Graph links are recorded only when grad mode is on
  // and some parent requires grad. Non-finite outputs raise NumericError.
  static Tensor make_result(std::string op, Shape shape, std::vector<T> data,
                            std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  const std::string& op() const { return node_->op; }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.clear(); }

  T item() const;

  // Reverse-mode accumulation from a scalar (seed 1) or with an explicit
  // same-shape seed. Consumes the graph: intermediate closures and grads are
  // released afterwards; leaf grads are kept.
  void backward();
  void backward(std::span<const T> seed);

  Tensor clone() const;   // detached deep copy
  Tensor detach() const;  // detached copy sharing nothing with the graph
  Tensor reshape(Shape shape) const;

  Node& node() { return *node_; }
  const Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  bool same(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Throws NumericError naming `what` if any value is NaN/Inf.
template <typename T>
void check_finite(std::span<const T> values, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace ynet
