#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ynet/tensor.hpp"

// Differentiable operations over NCHW tensors. Every op allocates a fresh
// output; inputs are never modified (batch_norm's running statistics are the
// one documented exception).
namespace ynet::ops {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

// Output extent of a convolution along one axis.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, const Conv2dOptions& opt);

// input [N,Cin,H,W] (or [Cin,H,W]), weight [Cout,Cin/groups,k,k], bias [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& opt = {});

enum class BnMode { train, eval };

// Per-channel normalization over (N,H,W). In train mode the running
// statistics are updated in place: r <- (1-momentum) r + momentum * batch_stat
// (unbiased variance for the running estimate).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, BnMode mode,
                     double eps = 1e-5, double momentum = 0.1);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Concatenation along the channel axis (axis 1 of NCHW).
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_channels<T>(std::span<const Tensor<T>>(parts));
}

// Bilinear resize with half-pixel centers: src = (dst + 0.5) * in/out - 0.5,
// clamped to the image. Works on [N,C,H,W] or [C,H,W].
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

// Integer-factor bilinear upsampling; factor must be >= 2.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::size_t factor);

// Bin i spans [floor(i*H/out_h), floor((i+1)*H/out_h)).
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

// input [N,Fin], weight [Fout,Fin], bias [Fout] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// [N,C,...] -> [N, C*...]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

struct CrossEntropyOptions {
  std::optional<std::int32_t> ignore_label;
  std::vector<double> class_weights;  // empty = uniform
};

// Mean negative log-softmax over non-ignored entries. logits [N,C] or
// [N,C,H,W]; targets has one label per (n[,h,w]).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                const CrossEntropyOptions& opt = {});

// Plain (non-recording) softmax over a vector.
template <typename T>
std::vector<T> softmax(std::span<const T> z);

// Softmax over the channel axis of [N,C,H,W] or [N,C] logits, no graph.
template <typename T>
std::vector<T> softmax_channels(const Tensor<T>& logits);

}  // namespace ynet::ops
