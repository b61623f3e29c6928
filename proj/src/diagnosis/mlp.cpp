#include "ynet/diagnosis/mlp.hpp"

#include <algorithm>
#include <string>

#include "ynet/optim.hpp"

namespace ynet::diagnosis {

Mlp::Mlp(Rng& rng) {
  for (std::size_t i = 0; i + 1 < kWidths.size(); ++i) {
    layers_.push_back(this->register_module("fc" + std::to_string(i + 1),
                                            std::make_shared<nn::Linear<double>>(kWidths[i], kWidths[i + 1], rng)));
  }
}

Tensord Mlp::forward(const Tensord& x) {
  if (x.rank() != 2 || x.dim(1) != kFeatureDim) {
    throw DimensionError("MLP expects [N, " + std::to_string(kFeatureDim) + "] input, got " + shape_str(x.shape()));
  }
  Tensord h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h);
    if (i + 1 < layers_.size()) h = ops::relu(h);
  }
  return h;
}

namespace {

Tensord batch(std::span<const std::array<double, kFeatureDim>> x) {
  std::vector<double> v;
  v.reserve(x.size() * kFeatureDim);
  for (const auto& r : x) v.insert(v.end(), r.begin(), r.end());
  return Tensord::from_data({x.size(), kFeatureDim}, std::move(v));
}

double accuracy_of(const Tensord& logits, std::span<const std::int32_t> y) {
  std::size_t hit = 0;
  const auto d = logits.data();
  for (std::size_t n = 0; n < y.size(); ++n) {
    const auto row = d.subspan(n * kDiagnosticClasses, kDiagnosticClasses);
    hit += static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin()) == y[n];
  }
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

}  // namespace

MlpHistory mlp_train(Mlp& mlp, std::span<const std::array<double, kFeatureDim>> x, std::span<const int> labels,
                     const MlpTrainConfig& cfg) {
  if (x.empty()) throw InputError("MLP training set is empty");
  if (x.size() != labels.size()) {
    throw InputError("MLP training: " + std::to_string(x.size()) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<std::int32_t> y(labels.begin(), labels.end());
  for (auto v : y)
    if (v < 0 || v >= static_cast<int>(kDiagnosticClasses)) {
      throw InputError("diagnosis label " + std::to_string(v) + " outside 0.." + std::to_string(kDiagnosticClasses - 1));
    }
  const Tensord xb = batch(x);
  Sgd<double> opt(mlp.parameters(), cfg.lr, cfg.momentum);
  MlpHistory h;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const Tensord logits = mlp.forward(xb);
    Tensord loss = ops::softmax_cross_entropy(logits, std::span<const std::int32_t>(y));
    h.loss.push_back(loss.item());
    h.accuracy.push_back(accuracy_of(logits, y));
    loss.backward();
    opt.step();
  }
  return h;
}

Diagnosis diagnose(Mlp& mlp, const std::array<double, kFeatureDim>& features) {
  NoGradGuard ng;
  const Tensord logits = mlp.forward(Tensord::from_data({1, kFeatureDim}, {features.begin(), features.end()}));
  const auto p = ops::softmax<double>(logits.data());
  Diagnosis d;
  std::copy(p.begin(), p.end(), d.probabilities.begin());
  d.label = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  return d;
}

}  // namespace ynet::diagnosis
