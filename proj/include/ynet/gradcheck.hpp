#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ynet/tensor.hpp"

namespace ynet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a-n| / max(|a|, |n|, floor).
  // Gradients smaller than the floor are effectively held to an absolute
  // tolerance of tolerance*floor.
  double denom_floor = 1e-3;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t elements_checked = 0;
  double tolerance = 0.0;
  bool passed = true;
};

// Compares reverse-mode gradients of f = sum(R * fn()) with central finite
// differences (f(x+h) - f(x-h)) / 2h for every element of every tensor in
// `wrt`, where R is a fixed random projection of the output. `fn` must be a
// pure function of the current contents of `wrt`. 64-bit only.
GradCheckReport grad_check(const std::string& name, const std::function<Tensord()>& fn,
                           std::vector<Tensord> wrt, const GradCheckOptions& opt = {});

// Throws NumericError naming the op when the report failed.
void require_passed(const GradCheckReport& report);

}  // namespace ynet
