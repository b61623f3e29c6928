#include "ynet/nn/blocks.hpp"

namespace ynet::nn {

BlockKind parse_block_kind(std::string_view name) {
  if (name == "esp") return BlockKind::esp;
  if (name == "rcb") return BlockKind::rcb;
  if (name == "psp") return BlockKind::psp;
  throw ConfigError("unknown block kind '" + std::string(name) + "' (expected esp, rcb or psp)");
}

std::string_view block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::esp:
      return "esp";
    case BlockKind::rcb:
      return "rcb";
    case BlockKind::psp:
      return "psp";
  }
  return "?";
}

template <typename T>
void Block<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != in_) {
    throw DimensionError(std::string(kind_name()) + " block expects [N," + std::to_string(in_) + ",H,W], got " +
                         shape_str(x.shape()));
  }
}

// ---- ESP -------------------------------------------------------------------

template <typename T>
EspBlock<T>::EspBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : Block<T>(in_channels, out_channels) {
  const std::size_t n = out_channels / kBranches;
  typename Conv2d<T>::Options pw;
  pw.kernel = 1;
  reduce_ = this->register_module("reduce", std::make_shared<Conv2d<T>>(in_channels, n, pw, rng));
  for (std::size_t k = 0; k < kBranches; ++k) {
    typename Conv2d<T>::Options o;
    o.kernel = 3;
    o.dilation = kDilations[k];
    branches_.push_back(
        this->register_module("branch" + std::to_string(k), std::make_shared<Conv2d<T>>(n, n, o, rng)));
  }
  out_ = this->register_module("out", std::make_shared<BnRelu<T>>(out_channels));
}

template <typename T>
Tensor<T> EspBlock<T>::forward(const Tensor<T>& x) {
  this->check_input(x);
  const Tensor<T> reduced = reduce_->forward(x);
  std::vector<Tensor<T>> fused;
  fused.reserve(kBranches);
  fused.push_back(branches_[0]->forward(reduced));
  Tensor<T> running;
  for (std::size_t k = 1; k < kBranches; ++k) {
    Tensor<T> b = branches_[k]->forward(reduced);
    running = k == 1 ? b : ops::add(running, b);
    fused.push_back(running);
  }
  Tensor<T> y = out_->forward(ops::concat_channels<T>(std::span<const Tensor<T>>(fused)));
  return residual() ? ops::add(y, x) : y;
}

template <typename T>
std::vector<std::shared_ptr<Conv2d<T>>> EspBlock<T>::convs() const {
  std::vector<std::shared_ptr<Conv2d<T>>> out{reduce_};
  out.insert(out.end(), branches_.begin(), branches_.end());
  return out;
}

// ---- RCB -------------------------------------------------------------------

template <typename T>
RcbBlock<T>::RcbBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : Block<T>(in_channels, out_channels) {
  typename Conv2d<T>::Options o;
  o.kernel = 3;
  conv1_ = this->register_module("conv1", std::make_shared<Conv2d<T>>(in_channels, out_channels, o, rng));
  bn1_ = this->register_module("bn1", std::make_shared<BatchNorm2d<T>>(out_channels));
  conv2_ = this->register_module("conv2", std::make_shared<Conv2d<T>>(out_channels, out_channels, o, rng));
  bn2_ = this->register_module("bn2", std::make_shared<BatchNorm2d<T>>(out_channels));
  if (in_channels != out_channels) {
    typename Conv2d<T>::Options pw;
    pw.kernel = 1;
    proj_ = this->register_module("proj", std::make_shared<Conv2d<T>>(in_channels, out_channels, pw, rng));
    proj_bn_ = this->register_module("proj_bn", std::make_shared<BatchNorm2d<T>>(out_channels));
  }
}

template <typename T>
Tensor<T> RcbBlock<T>::forward(const Tensor<T>& x) {
  this->check_input(x);
  Tensor<T> h = ops::relu(bn1_->forward(conv1_->forward(x)));
  h = bn2_->forward(conv2_->forward(h));
  const Tensor<T> shortcut = proj_ ? proj_bn_->forward(proj_->forward(x)) : x;
  return ops::relu(ops::add(h, shortcut));
}

template <typename T>
std::vector<std::shared_ptr<Conv2d<T>>> RcbBlock<T>::convs() const {
  std::vector<std::shared_ptr<Conv2d<T>>> out{conv1_, conv2_};
  if (proj_) out.push_back(proj_);
  return out;
}

// ---- PSP -------------------------------------------------------------------

template <typename T>
PspBlock<T>::PspBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : Block<T>(in_channels, out_channels) {
  const std::size_t per_branch = out_channels / kBins.size();
  for (std::size_t i = 0; i < kBins.size(); ++i) {
    branches_.push_back(this->register_module("pool" + std::to_string(kBins[i]),
                                              std::make_shared<ConvBnRelu<T>>(in_channels, per_branch, 1, 1, rng)));
  }
  project_ = this->register_module("project", std::make_shared<ConvBnRelu<T>>(in_channels, out_channels, 1, 1, rng));
  fuse_ = this->register_module("fuse", std::make_shared<ConvBnRelu<T>>(2 * out_channels, out_channels, 3, 1, rng));
}

template <typename T>
void PspBlock<T>::check_spatial(const Tensor<T>& x) const {
  const std::size_t need = kBins.back();
  if (x.dim(2) < need || x.dim(3) < need) {
    throw ConfigError("psp block needs spatial size >= " + std::to_string(need) + "x" + std::to_string(need) +
                      ", got " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                      "; use a larger instance or move the block to a finer level");
  }
}

template <typename T>
std::vector<Tensor<T>> PspBlock<T>::pooled(const Tensor<T>& x) const {
  this->check_input(x);
  check_spatial(x);
  std::vector<Tensor<T>> out;
  for (auto b : kBins) out.push_back(ops::adaptive_avg_pool(x, b, b));
  return out;
}

template <typename T>
Tensor<T> PspBlock<T>::forward(const Tensor<T>& x) {
  const std::size_t h = x.rank() == 4 ? x.dim(2) : 0, w = x.rank() == 4 ? x.dim(3) : 0;
  const auto pools = pooled(x);
  std::vector<Tensor<T>> parts{project_->forward(x)};
  for (std::size_t i = 0; i < pools.size(); ++i) {
    parts.push_back(ops::resize_bilinear(branches_[i]->forward(pools[i]), h, w));
  }
  return fuse_->forward(ops::concat_channels<T>(std::span<const Tensor<T>>(parts)));
}

// ---- registry ----------------------------------------------------------------

template <typename T>
BlockRegistry<T>::BlockRegistry() {
  factories_["esp"] = [](std::size_t in, std::size_t out, Rng& rng) {
    return std::make_shared<EspBlock<T>>(in, out, rng);
  };
  factories_["rcb"] = [](std::size_t in, std::size_t out, Rng& rng) {
    return std::make_shared<RcbBlock<T>>(in, out, rng);
  };
  factories_["psp"] = [](std::size_t in, std::size_t out, Rng& rng) {
    return std::make_shared<PspBlock<T>>(in, out, rng);
  };
}

template <typename T>
BlockRegistry<T>& BlockRegistry<T>::instance() {
  static BlockRegistry registry;
  return registry;
}

template <typename T>
void BlockRegistry<T>::add(std::string name, Factory factory) {
  factories_[std::move(name)] = std::move(factory);
}

template <typename T>
bool BlockRegistry<T>::contains(std::string_view name) const {
  return factories_.find(name) != factories_.end();
}

template <typename T>
std::vector<std::string> BlockRegistry<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [n, f] : factories_) out.push_back(n);
  return out;
}

template <typename T>
std::shared_ptr<Block<T>> BlockRegistry<T>::make(std::string_view name, std::size_t in, std::size_t out,
                                                 Rng& rng) const {
  auto it = factories_.find(name);
  if (it == factories_.end()) throw ConfigError("block kind '" + std::string(name) + "' is not registered");
  return it->second(in, out, rng);
}

template <typename T>
std::shared_ptr<Block<T>> make_block(const BlockSpec& spec, Rng& rng) {
  const auto name = block_kind_name(spec.kind);
  if (spec.in_channels == 0 || spec.out_channels == 0) {
    throw ConfigError(std::string(name) + " block: channel counts must be positive");
  }
  if (spec.kind == BlockKind::esp && spec.out_channels % EspBlock<T>::kBranches != 0) {
    throw ConfigError("esp block: out_channels=" + std::to_string(spec.out_channels) + " is not divisible by " +
                      std::to_string(EspBlock<T>::kBranches) +
                      " branches; pick a width multiplier w that is a multiple of 8");
  }
  if (spec.kind == BlockKind::psp && spec.out_channels % PspBlock<T>::kBins.size() != 0) {
    throw ConfigError("psp block: out_channels=" + std::to_string(spec.out_channels) + " is not divisible by " +
                      std::to_string(PspBlock<T>::kBins.size()) +
                      " pyramid bins; pick a width multiplier w that is a multiple of 4");
  }
  return BlockRegistry<T>::instance().make(name, spec.in_channels, spec.out_channels, rng);
}

template class Block<float>;
template class Block<double>;
template class EspBlock<float>;
template class EspBlock<double>;
template class RcbBlock<float>;
template class RcbBlock<double>;
template class PspBlock<float>;
template class PspBlock<double>;
template class BlockRegistry<float>;
template class BlockRegistry<double>;
template std::shared_ptr<Block<float>> make_block<float>(const BlockSpec&, Rng&);
template std::shared_ptr<Block<double>> make_block<double>(const BlockSpec&, Rng&);

}  // namespace ynet::nn
