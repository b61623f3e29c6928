#include "ynet/nn/module.hpp"

namespace ynet::nn {

template <typename T>
Tensor<T> Module<T>::register_parameter(std::string name, Tensor<T> t) {
  t.set_requires_grad(true);
  params_.emplace_back(std::move(name), t);
  return t;
}

template <typename T>
Tensor<T> Module<T>::register_buffer(std::string name, Tensor<T> t) {
  t.set_requires_grad(false);
  buffers_.emplace_back(std::move(name), t);
  return t;
}

template <typename T>
void Module<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out, bool params,
                        bool buffers) const {
  if (params) {
    for (const auto& [n, t] : params_) out.push_back({prefix + n, t});
  }
  if (buffers) {
    for (const auto& [n, t] : buffers_) out.push_back({prefix + n, t});
  }
  for (const auto& [n, child] : children_) child->collect(prefix + n + ".", out, params, buffers);
}

template <typename T>
std::vector<NamedTensor<T>> Module<T>::named_parameters() const {
  std::vector<NamedTensor<T>> out;
  collect("", out, true, false);
  return out;
}

template <typename T>
std::vector<Tensor<T>> Module<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Module<T>::named_state() const {
  std::vector<NamedTensor<T>> out;
  collect("", out, true, false);
  collect("", out, false, true);
  return out;
}

template <typename T>
std::size_t Module<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_parameters()) n += nt.tensor.numel();
  return n;
}

template <typename T>
void Module<T>::set_training(bool on) {
  training_ = on;
  for (auto& [n, child] : children_) child->set_training(on);
}

template class Module<float>;
template class Module<double>;

}  // namespace ynet::nn
