#include "ynet/nn/layers.hpp"

#include <cmath>

namespace ynet::nn {

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, Options opt, Rng& rng)
    : in_(in_channels), out_(out_channels) {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("Conv2d: channel counts must be positive");
  if (opt.kernel % 2 == 0) throw ConfigError("Conv2d: kernel size must be odd");
  if (opt.groups == 0 || in_channels % opt.groups || out_channels % opt.groups) {
    throw ConfigError("Conv2d: groups=" + std::to_string(opt.groups) + " must divide " + std::to_string(in_channels) +
                      " and " + std::to_string(out_channels));
  }
  conv_.stride = opt.stride;
  conv_.dilation = opt.dilation;
  conv_.groups = opt.groups;
  conv_.padding = opt.dilation * (opt.kernel - 1) / 2;
  const std::size_t fan_in = in_channels / opt.groups * opt.kernel * opt.kernel;
  weight_ = this->register_parameter(
      "weight", uniform_tensor<T>({out_channels, in_channels / opt.groups, opt.kernel, opt.kernel},
                                  std::sqrt(6.0 / static_cast<double>(fan_in)), rng));
  if (opt.bias) {
    bias_ = this->register_parameter("bias", uniform_tensor<T>({out_channels}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  return ops::conv2d(x, weight_, bias_, conv_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, double eps, double momentum) : eps_(eps), momentum_(momentum) {
  gamma_ = this->register_parameter("gamma", Tensor<T>::full({channels}, T{1}));
  beta_ = this->register_parameter("beta", Tensor<T>::zeros({channels}));
  running_mean_ = this->register_buffer("running_mean", Tensor<T>::zeros({channels}));
  running_var_ = this->register_buffer("running_var", Tensor<T>::full({channels}, T{1}));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  return ops::batch_norm(x, gamma_, beta_, running_mean_, running_var_,
                         this->training() ? ops::BnMode::train : ops::BnMode::eval, eps_, momentum_);
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight_ = this->register_parameter(
      "weight", uniform_tensor<T>({out_features, in_features}, std::sqrt(6.0 / static_cast<double>(in_features)), rng));
  if (bias) bias_ = this->register_parameter("bias", uniform_tensor<T>({out_features}, bound, rng));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  return ops::linear(x, weight_, bias_);
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride, Rng& rng, std::size_t dilation) {
  typename Conv2d<T>::Options o;
  o.kernel = kernel;
  o.stride = stride;
  o.dilation = dilation;
  conv_ = this->register_module("conv", std::make_shared<Conv2d<T>>(in_channels, out_channels, o, rng));
  bn_ = this->register_module("bn", std::make_shared<BatchNorm2d<T>>(out_channels));
}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x) {
  return ops::relu(bn_->forward(conv_->forward(x)));
}

template <typename T>
BnRelu<T>::BnRelu(std::size_t channels) {
  bn_ = this->register_module("bn", std::make_shared<BatchNorm2d<T>>(channels));
}

template <typename T>
Tensor<T> BnRelu<T>::forward(const Tensor<T>& x) {
  return ops::relu(bn_->forward(x));
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Linear<float>;
template class Linear<double>;
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;
template class BnRelu<float>;
template class BnRelu<double>;

}  // namespace ynet::nn
