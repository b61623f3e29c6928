#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ynet/nn/layers.hpp"

namespace ynet::nn {

enum class BlockKind { esp, rcb, psp };

// "esp" | "rcb" | "psp" (case-sensitive, as used in configs and CLI flags).
BlockKind parse_block_kind(std::string_view name);
std::string_view block_kind_name(BlockKind kind);

struct BlockSpec {
  BlockKind kind = BlockKind::esp;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

// A spatial-size-preserving convolutional unit: [N,C_in,H,W] -> [N,C_out,H,W].
template <typename T>
class Block : public Layer<T> {
 public:
  Block(std::size_t in_channels, std::size_t out_channels) : in_(in_channels), out_(out_channels) {}
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  virtual std::string_view kind_name() const = 0;

 protected:
  void check_input(const Tensor<T>& x) const;

 private:
  std::size_t in_, out_;
};

// Efficient spatial pyramid: 1x1 reduction to C_out/4, four parallel 3x3
// dilated convs (rates 1, 2, 4, 8), hierarchical additive fusion of branches
// 2..4, concat, BN+ReLU, residual add when C_in == C_out.
template <typename T>
class EspBlock : public Block<T> {
 public:
  static constexpr std::size_t kBranches = 4;
  static constexpr std::array<std::size_t, kBranches> kDilations{1, 2, 4, 8};

  EspBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  std::string_view kind_name() const override { return "esp"; }

  bool residual() const { return this->in_channels() == this->out_channels(); }
  std::vector<std::shared_ptr<Conv2d<T>>> convs() const;

 private:
  std::shared_ptr<Conv2d<T>> reduce_;
  std::vector<std::shared_ptr<Conv2d<T>>> branches_;
  std::shared_ptr<BnRelu<T>> out_;
};

// Extent of a 3x3 kernel at the given dilation: 2*dilation + 1.
constexpr std::size_t dilated_receptive_field(std::size_t dilation) { return 2 * dilation + 1; }

// Residual block: relu(BN(conv3x3(relu(BN(conv3x3(x))))) + shortcut(x));
// shortcut is identity when C_in == C_out, else 1x1 conv + BN.
template <typename T>
class RcbBlock : public Block<T> {
 public:
  RcbBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  std::string_view kind_name() const override { return "rcb"; }

  std::vector<std::shared_ptr<Conv2d<T>>> convs() const;

 private:
  std::shared_ptr<Conv2d<T>> conv1_, conv2_, proj_;
  std::shared_ptr<BatchNorm2d<T>> bn1_, bn2_, proj_bn_;
};

// Pyramid pooling: pool to {1,2,3,6} bins per side, 1x1 conv+BN+ReLU to
// C_out/4 each, bilinear back to H x W, concat with a 1x1 conv+BN+ReLU
// projection of x (2*C_out channels), fuse with 3x3 conv+BN+ReLU to C_out.
template <typename T>
class PspBlock : public Block<T> {
 public:
  static constexpr std::array<std::size_t, 4> kBins{1, 2, 3, 6};

  PspBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  std::string_view kind_name() const override { return "psp"; }

  // Pooled maps before the branch convs, one per bin size.
  std::vector<Tensor<T>> pooled(const Tensor<T>& x) const;
  ConvBnRelu<T>& fuse() { return *fuse_; }

 private:
  void check_spatial(const Tensor<T>& x) const;

  std::vector<std::shared_ptr<ConvBnRelu<T>>> branches_;
  std::shared_ptr<ConvBnRelu<T>> project_;
  std::shared_ptr<ConvBnRelu<T>> fuse_;
};

// Zero-parameter pass-through (C_in must equal C_out). Used by tests.
template <typename T>
class IdentityBlock : public Block<T> {
 public:
  explicit IdentityBlock(std::size_t channels) : Block<T>(channels, channels) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    this->check_input(x);
    return x;
  }
  std::string_view kind_name() const override { return "identity"; }
};

// Name -> factory table. The three built-in kinds are pre-registered; new
// kinds can be added without touching the network topology code.
template <typename T>
class BlockRegistry {
 public:
  using Factory = std::function<std::shared_ptr<Block<T>>(std::size_t in, std::size_t out, Rng& rng)>;

  static BlockRegistry& instance();

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;
  std::shared_ptr<Block<T>> make(std::string_view name, std::size_t in, std::size_t out, Rng& rng) const;

 private:
  BlockRegistry();
  std::map<std::string, Factory, std::less<>> factories_;
};

// Validates divisibility constraints (with a remediation hint) and builds the block.
template <typename T>
std::shared_ptr<Block<T>> make_block(const BlockSpec& spec, Rng& rng);

#define YNET_EXTERN_BLOCKS(T)            \
  extern template class EspBlock<T>;      \
  extern template class RcbBlock<T>;      \
  extern template class PspBlock<T>;      \
  extern template class BlockRegistry<T>;
YNET_EXTERN_BLOCKS(float)
YNET_EXTERN_BLOCKS(double)
#undef YNET_EXTERN_BLOCKS

}  // namespace ynet::nn
