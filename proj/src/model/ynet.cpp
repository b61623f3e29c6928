#include "ynet/model/ynet.hpp"

namespace ynet::model {

namespace {
constexpr std::size_t kStemChannels = 16;
constexpr std::size_t kHiddenFc = 64;
}  // namespace

template <typename T>
EncoderLevel<T>::EncoderLevel(std::size_t in_channels, std::size_t width, std::size_t depth, nn::BlockKind kind,
                              Sharing sharing, Rng& rng)
    : sharing_(sharing), out_(sharing == Sharing::concat ? 2 * width : width) {
  entry_ = this->register_module("entry", std::make_shared<nn::ConvBnRelu<T>>(in_channels, width, 3, 2, rng));
  for (std::size_t i = 0; i < depth; ++i) {
    blocks_.push_back(this->register_module("block" + std::to_string(i), nn::make_block<T>({kind, width, width}, rng)));
  }
  if (sharing != Sharing::none) merge_ = this->register_module("merge", std::make_shared<nn::BnRelu<T>>(out_));
}

template <typename T>
Tensor<T> EncoderLevel<T>::forward(const Tensor<T>& x) {
  const Tensor<T> first = entry_->forward(x);
  Tensor<T> h = first;
  for (auto& b : blocks_) h = b->forward(h);
  switch (sharing_) {
    case Sharing::none:
      return h;
    case Sharing::add:
      return merge_->forward(ops::add(first, h));
    case Sharing::concat:
      return merge_->forward(ops::concat_channels(first, h));
  }
  return h;
}

template <typename T>
ClassificationHead<T>::ClassificationHead(const NetworkConfig& cfg, std::size_t in_channels, Rng& rng) {
  level4_ = this->register_module(
      "level4", std::make_shared<EncoderLevel<T>>(in_channels, cfg.w, 2, cfg.encoder, cfg.sharing, rng));
  level5_ = this->register_module(
      "level5", std::make_shared<EncoderLevel<T>>(level4_->out_channels(), cfg.w / 2, 2, cfg.encoder, cfg.sharing, rng));
  fc1_ = this->register_module("fc1", std::make_shared<nn::Linear<T>>(level5_->out_channels(), kHiddenFc, rng));
  fc2_ = this->register_module("fc2", std::make_shared<nn::Linear<T>>(kHiddenFc, cfg.diagnostic_classes, rng));
}

template <typename T>
Tensor<T> ClassificationHead<T>::forward(const Tensor<T>& e3) {
  Tensor<T> h = level5_->forward(level4_->forward(e3));
  h = ops::flatten(ops::adaptive_avg_pool(h, 1, 1));
  return fc2_->forward(ops::relu(fc1_->forward(h)));
}

template <typename T>
YNet<T>::YNet(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t w = cfg_.w;
  level1_ = this->register_module("level1", std::make_shared<nn::ConvBnRelu<T>>(3, kStemChannels, 7, 2, rng));
  level2_ = this->register_module(
      "level2", std::make_shared<EncoderLevel<T>>(kStemChannels, w, 2, cfg_.encoder, cfg_.sharing, rng));
  level3_ = this->register_module(
      "level3", std::make_shared<EncoderLevel<T>>(level2_->out_channels(), 2 * w, cfg_.d, cfg_.encoder, cfg_.sharing, rng));
  dec3_ = this->register_module("dec3", nn::make_block<T>({cfg_.decoder, level3_->out_channels(), 2 * w}, rng));
  dec2_ = this->register_module("dec2", nn::make_block<T>({cfg_.decoder, 2 * w + level2_->out_channels(), w}, rng));
  dec1_ = this->register_module("dec1", nn::make_block<T>({cfg_.decoder, w + kStemChannels, kStemChannels}, rng));
  typename nn::Conv2d<T>::Options o;
  o.kernel = 1;
  o.bias = true;
  classifier_ = this->register_module("classifier", std::make_shared<nn::Conv2d<T>>(kStemChannels, cfg_.tissue_classes, o, rng));
}

template <typename T>
void YNet<T>::attach_classification_head(Rng& rng) {
  if (head_) throw StateError("classification head is already attached");
  head_ = this->register_module("head", std::make_shared<ClassificationHead<T>>(cfg_, level3_->out_channels(), rng));
}

template <typename T>
Tensor<T> YNet<T>::as_batch(const Tensor<T>& x, std::size_t multiple) const {
  Tensor<T> b = x;
  if (x.rank() == 3) b = x.reshape({1, x.dim(0), x.dim(1), x.dim(2)});
  if (b.rank() != 4 || b.dim(1) != 3) {
    throw DimensionError("Y-Net expects [N,3,H,W] or [3,H,W] input, got " + shape_str(x.shape()));
  }
  if (b.dim(2) % multiple != 0 || b.dim(3) % multiple != 0) {
    throw ShapeError("input " + std::to_string(b.dim(2)) + "x" + std::to_string(b.dim(3)) +
                     " not divisible by " + std::to_string(multiple) + " (required multiple for this mode)");
  }
  return b;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> YNet<T>::run_seg(const Tensor<T>& x) {
  const Tensor<T> e1 = level1_->forward(x);
  const Tensor<T> e2 = level2_->forward(e1);
  const Tensor<T> e3 = level3_->forward(e2);
  Tensor<T> h = dec3_->forward(e3);
  h = dec2_->forward(ops::concat_channels(ops::bilinear_upsample(h, 2), e2));
  h = dec1_->forward(ops::concat_channels(ops::bilinear_upsample(h, 2), e1));
  h = ops::bilinear_upsample(classifier_->forward(h), 2);
  return {h, e3};
}

template <typename T>
Tensor<T> YNet<T>::forward_seg(const Tensor<T>& x) {
  return run_seg(as_batch(x, kSegMultiple)).first;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> YNet<T>::forward_joint(const Tensor<T>& x) {
  if (!head_) throw StateError("forward_joint needs the classification head; call attach_classification_head first");
  auto [seg, e3] = run_seg(as_batch(x, kJointMultiple));
  return {seg, head_->forward(e3)};
}

template <typename T>
std::size_t YNet<T>::seg_param_count() const {
  return this->param_count() - head_param_count();
}

template <typename T>
std::size_t YNet<T>::head_param_count() const {
  return head_ ? head_->param_count() : 0;
}

template <typename T>
MultiTaskLoss<T> multi_task_loss(const Tensor<T>& seg_logits, std::span<const std::int32_t> seg_target,
                                 const Tensor<T>& cls_logits, std::span<const std::int32_t> cls_target,
                                 const ops::CrossEntropyOptions& seg_opt) {
  MultiTaskLoss<T> l;
  l.seg = ops::softmax_cross_entropy(seg_logits, seg_target, seg_opt);
  l.cls = ops::softmax_cross_entropy(cls_logits, cls_target);
  l.total = ops::add(l.seg, l.cls);
  return l;
}

template class EncoderLevel<float>;
template class EncoderLevel<double>;
template class ClassificationHead<float>;
template class ClassificationHead<double>;
template class YNet<float>;
template class YNet<double>;
template MultiTaskLoss<float> multi_task_loss<float>(const Tensor<float>&, std::span<const std::int32_t>,
                                                     const Tensor<float>&, std::span<const std::int32_t>,
                                                     const ops::CrossEntropyOptions&);
template MultiTaskLoss<double> multi_task_loss<double>(const Tensor<double>&, std::span<const std::int32_t>,
                                                       const Tensor<double>&, std::span<const std::int32_t>,
                                                       const ops::CrossEntropyOptions&);

}  // namespace ynet::model
