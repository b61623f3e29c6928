#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ynet/rng.hpp"
#include "ynet/tensor.hpp"

namespace ynet::nn {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Owner of trainable parameters, persistent buffers (e.g. BN running stats)
// and child modules. Names are dotted paths ("level2.block0.reduce.weight").
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  std::vector<NamedTensor<T>> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  // Parameters followed by buffers; this is what checkpoints persist.
  std::vector<NamedTensor<T>> named_state() const;
  std::size_t param_count() const;

  void set_training(bool on);
  bool training() const { return training_; }

 protected:
  // Returned handles alias the registered storage.
  Tensor<T> register_parameter(std::string name, Tensor<T> t);
  Tensor<T> register_buffer(std::string name, Tensor<T> t);

  template <typename M>
  std::shared_ptr<M> register_module(std::string name, std::shared_ptr<M> m) {
    children_.emplace_back(std::move(name), m);
    m->set_training(training_);
    return m;
  }

 private:
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out, bool params, bool buffers) const;

  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
  bool training_ = true;
};

// Forward contract shared by every plug-in block: C_in x H x W -> C_out x H x W.
template <typename T>
class Layer : public Module<T> {
 public:
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
};

extern template class Module<float>;
extern template class Module<double>;

}  // namespace ynet::nn
