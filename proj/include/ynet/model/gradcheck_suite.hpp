#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ynet/gradcheck.hpp"

namespace ynet::model {

struct GradSuiteOptions {
  double tolerance = 1e-4;
  std::uint64_t seed = 17;
  // Negative control: adds an op whose backward is deliberately wrong, so the
  // suite must fail.
  bool corrupt_backward = false;
};

// Finite-difference checks of every differentiable op, every block, the
// encoder level under each sharing mode and the whole network (both arms,
// through the multi-task loss), all in 64-bit.
std::vector<GradCheckReport> run_gradcheck_suite(const GradSuiteOptions& opt = {},
                                                 const std::function<void(const GradCheckReport&)>& on_report = {});

}  // namespace ynet::model
