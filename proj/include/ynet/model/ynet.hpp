#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ynet/model/config.hpp"

namespace ynet::model {

// One encoder level: strided 3x3 conv+BN+ReLU to `width`, a stack of
// `depth` width->width blocks, then the feature-sharing merge of the conv
// output with the last block output:
//   none   -> blocks output (width)
//   add    -> BN+ReLU(conv + blocks) (width)
//   concat -> BN+ReLU([conv, blocks]) (2*width)
template <typename T>
class EncoderLevel : public nn::Layer<T> {
 public:
  EncoderLevel(std::size_t in_channels, std::size_t width, std::size_t depth, nn::BlockKind kind, Sharing sharing,
               Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  std::size_t out_channels() const { return out_; }

 private:
  Sharing sharing_;
  std::size_t out_;
  std::shared_ptr<nn::ConvBnRelu<T>> entry_;
  std::vector<std::shared_ptr<nn::Block<T>>> blocks_;
  std::shared_ptr<nn::BnRelu<T>> merge_;
};

// Encoder levels 4-6 plus the FC layers: the second arm of the Y.
template <typename T>
class ClassificationHead : public nn::Layer<T> {
 public:
  ClassificationHead(const NetworkConfig& cfg, std::size_t in_channels, Rng& rng);
  // level-3 features -> [N, diagnostic_classes] logits
  Tensor<T> forward(const Tensor<T>& e3) override;

 private:
  std::shared_ptr<EncoderLevel<T>> level4_, level5_;
  std::shared_ptr<nn::Linear<T>> fc1_, fc2_;
};

// Y-Net: encoder levels 1-3 with a U-Net style decoder (segmentation stage);
// levels 4-6 attach later as the classification head.
template <typename T>
class YNet : public nn::Module<T> {
 public:
  YNet(const NetworkConfig& cfg, Rng& rng);

  const NetworkConfig& config() const { return cfg_; }

  // Freshly initialized head; StateError if one is already attached.
  void attach_classification_head(Rng& rng);
  bool has_head() const { return static_cast<bool>(head_); }

  // x: [N,3,H,W] or [3,H,W]. H, W must be multiples of 8.
  Tensor<T> forward_seg(const Tensor<T>& x);
  // Requires the head; H, W must be multiples of 32.
  std::pair<Tensor<T>, Tensor<T>> forward_joint(const Tensor<T>& x);

  std::size_t seg_param_count() const;
  std::size_t head_param_count() const;

  static constexpr std::size_t kSegMultiple = 8;
  static constexpr std::size_t kJointMultiple = 32;

 private:
  Tensor<T> as_batch(const Tensor<T>& x, std::size_t multiple) const;
  // Runs the segmentation arm; also returns the level-3 features for the head.
  std::pair<Tensor<T>, Tensor<T>> run_seg(const Tensor<T>& x);

  NetworkConfig cfg_;
  std::shared_ptr<nn::ConvBnRelu<T>> level1_;
  std::shared_ptr<EncoderLevel<T>> level2_, level3_;
  std::shared_ptr<nn::Block<T>> dec3_, dec2_, dec1_;
  std::shared_ptr<nn::Conv2d<T>> classifier_;
  std::shared_ptr<ClassificationHead<T>> head_;
};

// L = Lseg + Lcls, each a mean multinomial cross-entropy.
template <typename T>
struct MultiTaskLoss {
  Tensor<T> total, seg, cls;
};

template <typename T>
MultiTaskLoss<T> multi_task_loss(const Tensor<T>& seg_logits, std::span<const std::int32_t> seg_target,
                                 const Tensor<T>& cls_logits, std::span<const std::int32_t> cls_target,
                                 const ops::CrossEntropyOptions& seg_opt = {});

extern template class EncoderLevel<float>;
extern template class EncoderLevel<double>;
extern template class ClassificationHead<float>;
extern template class ClassificationHead<double>;
extern template class YNet<float>;
extern template class YNet<double>;

}  // namespace ynet::model
