#include "ynet/optim.hpp"

#include <string>

namespace ynet {

namespace {

template <typename T>
void require_grad(const Tensor<T>& p, std::size_t index) {
  if (!p.has_grad()) {
    throw OptimizerError("parameter #" + std::to_string(index) + " " + shape_str(p.shape()) +
                         " has no gradient; run backward() before stepping");
  }
}

}  // namespace

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) require_grad(params[i], i);
  for (auto& p : params) {
    auto d = p.data();
    auto g = p.grad();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = static_cast<T>(d[j] - lr * g[j]);
    p.zero_grad();
  }
}

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  if (lr < 0) throw ConfigError("Sgd: learning rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("Sgd: momentum must lie in [0, 1)");
  if (momentum_ > 0) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.numel(), T{0});
  }
}

template <typename T>
void Sgd<T>::step() {
  if (momentum_ == 0) {
    sgd_step(params_, lr_);
    return;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) require_grad(params_[i], i);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto d = params_[i].data();
    auto g = params_[i].grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < d.size(); ++j) {
      v[j] = static_cast<T>(momentum_ * v[j] + g[j]);
      d[j] = static_cast<T>(d[j] - lr_ * v[j]);
    }
    params_[i].zero_grad();
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void sgd_step<float>(std::vector<Tensor<float>>&, double);
template void sgd_step<double>(std::vector<Tensor<double>>&, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace ynet
