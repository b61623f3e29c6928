#pragma once

#include <vector>

#include "ynet/tensor.hpp"

namespace ynet {

// Plain SGD: p <- p - lr * grad(p), then grads are cleared. Throws
// OptimizerError if a parameter has no gradient.
template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, double lr);

// SGD with optional heavy-ball momentum (v <- mu v + g; p <- p - lr v).
// momentum = 0 reduces exactly to sgd_step.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Tensor<T>> params, double lr, double momentum = 0.0);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double lr_;
  double momentum_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace ynet
