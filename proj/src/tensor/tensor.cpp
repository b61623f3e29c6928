#include "ynet/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <type_traits>
#include <unordered_set>

namespace ynet {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
void check_finite(std::span<const T> values, const std::string& what) {
  // Exponent-all-ones test on the raw bits: branch-free, so it vectorizes.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits exp_mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  const T* v = values.data();
  const std::size_t n = values.size();
  Bits bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Bits b;
    std::memcpy(&b, v + i, sizeof(T));
    bad |= static_cast<Bits>((b & exp_mask) == exp_mask);
  }
  if (!bad) return;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError("non-finite value in " + what + " at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(ynet::numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (ynet::numel(shape) != data.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(ynet::numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(std::string op, Shape shape, std::vector<T> data,
                                 std::vector<Tensor> parents, BackwardFn backward) {
  check_finite<T>(data, op + " output");
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
  }
  return Tensor(std::move(node));
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  if (i >= node_->shape.size()) {
    throw DimensionError("dim " + std::to_string(i) + " out of range for shape " +
                         shape_str(node_->shape));
  }
  return node_->shape[i];
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(node_->shape));
  }
  return node_->data[0];
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw DimensionError("backward() without seed needs a scalar, got " + shape_str(shape()));
  }
  const T one{1};
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void Tensor<T>::backward(std::span<const T> seed) {
  if (seed.size() != numel()) throw DimensionError("backward seed size mismatch");
  if (!node_->requires_grad) throw Error("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (parents before children).
  // The order owns its nodes: clearing parent links below must not free a node
  // that is still waiting for its turn.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{node_, 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> p = top.first->parents[top.second++];
      if (p->requires_grad && visited.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  auto g = node_->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (!n->backward) continue;
    if (n->grad.size() == n->data.size()) {
      n->backward(*n);
      for (auto& p : n->parents) {
        if (p->grad.size() == p->data.size()) check_finite<T>(p->grad, n->op + " backward");
      }
    }
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_data(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone();
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) const {
  if (ynet::numel(shape) != numel()) {
    throw DimensionError("reshape " + shape_str(node_->shape) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), node_->data, {*this}, [](Node& self) {
    auto& p = *self.parents[0];
    auto pg = p.grad_buffer();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
  });
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, const std::string&);
template void check_finite<double>(std::span<const double>, const std::string&);

}  // namespace ynet
