#pragma once

#include "ynet/nn/module.hpp"
#include "ynet/ops.hpp"

namespace ynet::nn {

// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
class Conv2d : public Layer<T> {
 public:
  struct Options {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    bool bias = false;
  };

  // Padding is dilation*(k-1)/2 ("same" for stride 1).
  Conv2d(std::size_t in_channels, std::size_t out_channels, Options opt, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const ops::Conv2dOptions& conv_options() const { return conv_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

 private:
  std::size_t in_, out_;
  ops::Conv2dOptions conv_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// gamma=1, beta=0, running mean 0 / var 1; eps 1e-5, momentum 0.1.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

  Tensor<T> forward(const Tensor<T>& x) override;

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  double eps_, momentum_;
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool bias = true);

  Tensor<T> forward(const Tensor<T>& x) override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// Bias-free conv -> BN -> ReLU.
template <typename T>
class ConvBnRelu : public Layer<T> {
 public:
  ConvBnRelu(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
             Rng& rng, std::size_t dilation = 1);

  Tensor<T> forward(const Tensor<T>& x) override;

  Conv2d<T>& conv() { return *conv_; }
  BatchNorm2d<T>& bn() { return *bn_; }

 private:
  std::shared_ptr<Conv2d<T>> conv_;
  std::shared_ptr<BatchNorm2d<T>> bn_;
};

// BN -> ReLU, applied after a feature-sharing merge.
template <typename T>
class BnRelu : public Layer<T> {
 public:
  explicit BnRelu(std::size_t channels);
  Tensor<T> forward(const Tensor<T>& x) override;

 private:
  std::shared_ptr<BatchNorm2d<T>> bn_;
};

#define YNET_EXTERN_LAYERS(T)          \
  extern template class Conv2d<T>;      \
  extern template class BatchNorm2d<T>; \
  extern template class Linear<T>;      \
  extern template class ConvBnRelu<T>;  \
  extern template class BnRelu<T>;
YNET_EXTERN_LAYERS(float)
YNET_EXTERN_LAYERS(double)
#undef YNET_EXTERN_LAYERS

}  // namespace ynet::nn
