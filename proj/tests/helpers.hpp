#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ynet/nn/blocks.hpp"
#include "ynet/rng.hpp"
#include "ynet/tensor.hpp"

namespace test {

inline ynet::Tensord random_tensor(ynet::Shape shape, ynet::Rng& rng, double lo = -1.0, double hi = 1.0,
                                   bool requires_grad = false) {
  std::vector<double> v(ynet::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return ynet::Tensord::from_data(std::move(shape), std::move(v), requires_grad);
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Direct 6-loop convolution, single image [Cin,H,W] -> [Cout,Ho,Wo].
inline std::vector<double> naive_conv(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                                      const std::vector<double>& wt, std::size_t cout, std::size_t k,
                                      std::size_t stride, std::size_t pad, std::size_t dil, std::size_t groups,
                                      const std::vector<double>& bias, std::size_t& ho, std::size_t& wo) {
  ho = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  wo = (w + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const std::size_t cin_g = cin / groups, cout_g = cout / groups;
  std::vector<double> y(cout * ho * wo, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    const std::size_t g = o / cout_g;
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < cin_g; ++c)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long r = long(i * stride + a * dil) - long(pad);
              const long q = long(j * stride + b * dil) - long(pad);
              if (r < 0 || q < 0 || r >= long(h) || q >= long(w)) continue;
              s += x[((g * cin_g + c) * h + r) * w + q] * wt[((o * cin_g + c) * k + a) * k + b];
            }
        y[(o * ho + i) * wo + j] = s;
      }
  }
  return y;
}

// Independent layer-formula oracle: bias-free convs k*k*in*out, BN 2*C.
inline std::size_t conv_p(std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out; }
inline std::size_t bn_p(std::size_t c) { return 2 * c; }

inline std::size_t oracle_params(ynet::nn::BlockKind kind, std::size_t in, std::size_t out) {
  using ynet::nn::BlockKind;
  switch (kind) {
    case BlockKind::rcb: {
      std::size_t p = conv_p(3, in, out) + bn_p(out) + conv_p(3, out, out) + bn_p(out);
      if (in != out) p += conv_p(1, in, out) + bn_p(out);
      return p;
    }
    case BlockKind::esp: {
      const std::size_t n = out / 4;
      return conv_p(1, in, n) + 4 * conv_p(3, n, n) + bn_p(out);
    }
    case BlockKind::psp: {
      const std::size_t q = out / 4;
      return 4 * (conv_p(1, in, q) + bn_p(q)) + conv_p(1, in, out) + bn_p(out) + conv_p(3, 2 * out, out) + bn_p(out);
    }
  }
  return 0;
}

}  // namespace test
