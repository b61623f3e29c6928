#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ynet/diagnosis/features.hpp"
#include "ynet/nn/layers.hpp"

namespace ynet::diagnosis {

inline constexpr std::size_t kDiagnosticClasses = 4;

// 44 -> 256 -> 128 -> 64 -> 32 -> 4, ReLU between layers. Kept in double:
// it is tiny and full-batch training then stays reproducible across builds.
class Mlp : public nn::Module<double> {
 public:
  static constexpr std::array<std::size_t, 6> kWidths{kFeatureDim, 256, 128, 64, 32, kDiagnosticClasses};

  explicit Mlp(Rng& rng);
  // x: [N, 44] -> logits [N, 4]
  Tensord forward(const Tensord& x);

 private:
  std::vector<std::shared_ptr<nn::Linear<double>>> layers_;
};

struct MlpTrainConfig {
  std::size_t epochs = 500;
  double lr = 1e-3;
  double momentum = 0.0;
};

struct MlpHistory {
  std::vector<double> loss;      // full-batch loss before each epoch's step
  std::vector<double> accuracy;  // matching training accuracy
};

// Full-batch SGD on softmax cross-entropy. InputError for labels outside 0..3
// or mismatched sizes.
MlpHistory mlp_train(Mlp& mlp, std::span<const std::array<double, kFeatureDim>> x, std::span<const int> labels,
                     const MlpTrainConfig& cfg);

struct Diagnosis {
  int label = 0;
  std::array<double, kDiagnosticClasses> probabilities{};
};

Diagnosis diagnose(Mlp& mlp, const std::array<double, kFeatureDim>& features);

}  // namespace ynet::diagnosis
