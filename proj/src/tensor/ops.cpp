#include "ynet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace ynet::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using MutArr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;

struct Nchw {
  std::size_t n, c, h, w;
  bool batched;
};

Nchw as_nchw(const Shape& s, const char* op) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  throw DimensionError(std::string(op) + ": expected [N,C,H,W] or [C,H,W], got " + shape_str(s));
}

// Eigen's vectorized sum() peels by pointer alignment, so the same values
// can sum differently in two allocations. Fixed lanes keep runs reproducible.
template <typename F>
double lane_sum(std::size_t n, F f) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) acc[k] += static_cast<double>(f(i + k));
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(f(i));
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

Shape make_shape(const Nchw& g, std::size_t c, std::size_t h, std::size_t w) {
  if (g.batched) return {g.n, c, h, w};
  return {c, h, w};
}

template <typename T>
bool wants_grad(const TensorNode<T>& self, std::size_t i) {
  return i < self.parents.size() && self.parents[i]->requires_grad;
}

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, ho, wo;
  std::size_t stride, pad, dil, groups;
  std::size_t cin_g, cout_g, kdim, plane;
  bool pointwise;
};

// Valid output-column range [lo, hi) for which ox*stride + off lies in [0, extent).
inline void valid_range(long off, std::size_t stride, std::size_t extent, std::size_t out,
                        std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(stride);
  const long e = static_cast<long>(extent);
  long l = off >= 0 ? 0 : (-off + s - 1) / s;
  long h = off > e - 1 ? 0 : (e - 1 - off) / s + 1;
  h = std::min<long>(h, static_cast<long>(out));
  l = std::min<long>(l, h);
  lo = static_cast<std::size_t>(std::max<long>(l, 0));
  hi = static_cast<std::size_t>(std::max<long>(h, 0));
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* dst = col + ((c * g.k + ki) * g.k + kj) * g.plane;
        const long offx = static_cast<long>(kj * g.dil) - static_cast<long>(g.pad);
        std::size_t lo, hi;
        valid_range(offx, g.stride, g.w, g.wo, lo, hi);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          T* row = dst + oy * g.wo;
          const long iy = static_cast<long>(oy * g.stride + ki * g.dil) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(row, row + g.wo, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.w;
          std::fill(row, row + lo, T{0});
          if (g.stride == 1) {
            if (hi > lo) std::memcpy(row + lo, src + (static_cast<long>(lo) + offx), (hi - lo) * sizeof(T));
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) {
              row[ox] = src[static_cast<long>(ox * g.stride) + offx];
            }
          }
          std::fill(row + hi, row + g.wo, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* xc = dx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* src = col + ((c * g.k + ki) * g.k + kj) * g.plane;
        const long offx = static_cast<long>(kj * g.dil) - static_cast<long>(g.pad);
        std::size_t lo, hi;
        valid_range(offx, g.stride, g.w, g.wo, lo, hi);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki * g.dil) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = xc + static_cast<std::size_t>(iy) * g.w;
          const T* row = src + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) {
            dst[static_cast<long>(ox * g.stride) + offx] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, const Conv2dOptions& opt) {
  const long span = static_cast<long>(opt.dilation * (kernel - 1) + 1);
  const long padded = static_cast<long>(in + 2 * opt.padding);
  if (padded < span) return 0;
  return static_cast<std::size_t>((padded - span) / static_cast<long>(opt.stride)) + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& opt) {
  const Nchw in = as_nchw(input.shape(), "conv2d");
  if (weight.rank() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin/g,k,k], got " + shape_str(weight.shape()));
  if (opt.groups == 0 || opt.stride == 0 || opt.dilation == 0) throw ConfigError("conv2d: stride, dilation and groups must be positive");
  if (in.c % opt.groups != 0 || weight.dim(0) % opt.groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(opt.groups) + " must divide Cin=" +
                      std::to_string(in.c) + " and Cout=" + std::to_string(weight.dim(0)));
  }
  ConvGeom g{};
  g.n = in.n;
  g.cin = in.c;
  g.h = in.h;
  g.w = in.w;
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.dil = opt.dilation;
  g.groups = opt.groups;
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (weight.dim(1) != g.cin_g || weight.dim(3) != g.k) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(input.shape()) + " and groups=" + std::to_string(g.groups));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(g.cout) + "], got " + shape_str(bias.shape()));
  }
  g.ho = conv_out_size(g.h, g.k, opt);
  g.wo = conv_out_size(g.w, g.k, opt);
  if (g.ho == 0 || g.wo == 0) throw DimensionError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel extent");
  g.kdim = g.cin_g * g.k * g.k;
  g.plane = g.ho * g.wo;
  g.pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;

  std::vector<T> out(g.n * g.cout * g.plane);
  std::vector<T> col(g.pointwise ? 0 : g.kdim * g.plane);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t gi = 0; gi < g.groups; ++gi) {
      const T* xg = x + (n * g.cin + gi * g.cin_g) * g.h * g.w;
      const T* colp = xg;
      if (!g.pointwise) {
        im2col(xg, g, col.data());
        colp = col.data();
      }
      ConstMap<T> wm(wt + gi * g.cout_g * g.kdim, g.cout_g, g.kdim);
      ConstMap<T> cm(colp, g.kdim, g.plane);
      MutMap<T> om(out.data() + (n * g.cout + gi * g.cout_g) * g.plane, g.cout_g, g.plane);
      om.noalias() = wm * cm;
    }
    if (bias.defined()) {
      const T* b = bias.data().data();
      for (std::size_t c = 0; c < g.cout; ++c) {
        T* o = out.data() + (n * g.cout + c) * g.plane;
        for (std::size_t p = 0; p < g.plane; ++p) o[p] += b[c];
      }
    }
  }

  std::vector<Tensor<T>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<T>::make_result(
      "conv2d", make_shape(in, g.cout, g.ho, g.wo), std::move(out), std::move(parents),
      [g](TensorNode<T>& self) {
        auto& xin = *self.parents[0];
        auto& wnode = *self.parents[1];
        const bool gx = xin.requires_grad, gw = wnode.requires_grad;
        const bool gb = wants_grad(self, 2);
        std::vector<T> col(g.pointwise ? 0 : g.kdim * g.plane);
        T* dx = gx ? xin.grad_buffer().data() : nullptr;
        T* dw = gw ? wnode.grad_buffer().data() : nullptr;
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t gi = 0; gi < g.groups; ++gi) {
            ConstMap<T> dy(self.grad.data() + (n * g.cout + gi * g.cout_g) * g.plane, g.cout_g, g.plane);
            ConstMap<T> wm(wnode.data.data() + gi * g.cout_g * g.kdim, g.cout_g, g.kdim);
            const T* xg = xin.data.data() + (n * g.cin + gi * g.cin_g) * g.h * g.w;
            if (gw) {
              const T* colp = xg;
              if (!g.pointwise) {
                im2col(xg, g, col.data());
                colp = col.data();
              }
              ConstMap<T> cm(colp, g.kdim, g.plane);
              MutMap<T> dwm(dw + gi * g.cout_g * g.kdim, g.cout_g, g.kdim);
              dwm.noalias() += dy * cm.transpose();
            }
            if (gx) {
              T* dxg = dx + (n * g.cin + gi * g.cin_g) * g.h * g.w;
              if (g.pointwise) {
                MutMap<T> dxm(dxg, g.kdim, g.plane);
                dxm.noalias() += wm.transpose() * dy;
              } else {
                MutMap<T> cm(col.data(), g.kdim, g.plane);
                cm.noalias() = wm.transpose() * dy;
                col2im_add(col.data(), g, dxg);
              }
            }
          }
        }
        if (gb) {
          auto db = self.parents[2]->grad_buffer();
          for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t c = 0; c < g.cout; ++c) {
              const T* d = self.grad.data() + (n * g.cout + c) * g.plane;
              double s = 0;
              for (std::size_t p = 0; p < g.plane; ++p) s += d[p];
              db[c] += static_cast<T>(s);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, BnMode mode, double eps,
                     double momentum) {
  if (input.rank() != 4) throw DimensionError("batch_norm: expected [N,C,H,W], got " + shape_str(input.shape()));
  if (!(eps > 0)) throw ConfigError("batch_norm: eps must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->numel() != c) {
      throw DimensionError("batch_norm: per-channel tensor of size " + std::to_string(t->numel()) +
                           " for input with C=" + std::to_string(c));
    }
  }
  const std::size_t count = n * plane;
  const T* x = input.data().data();
  auto seg = [plane](const T* p) { return ConstArr<T>(p, static_cast<Eigen::Index>(plane)); };
  std::vector<T> mean(c), invstd(c);
  if (mode == BnMode::train) {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        s += lane_sum(plane, [p](std::size_t j) { return p[j]; });
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        const T m = static_cast<T>(mu);
        ss += lane_sum(plane, [p, m](std::size_t j) { return (p[j] - m) * (p[j] - m); });
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * mu);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.data()[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data()[ch]) + eps));
    }
  }
  std::vector<T> out(input.numel());
  const T* gm = gamma.data().data();
  const T* bt = beta.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * plane;
      const T scale = gm[ch] * invstd[ch];
      const T shift = bt[ch] - mean[ch] * scale;
      MutArr<T>(out.data() + off, static_cast<Eigen::Index>(plane)) = seg(x + off) * scale + shift;
    }
  }
  const bool train = mode == BnMode::train;
  return Tensor<T>::make_result(
      "batch_norm", input.shape(), std::move(out), {input, gamma, beta},
      [n, c, plane, count, train, mean = std::move(mean), invstd = std::move(invstd)](TensorNode<T>& self) {
        auto& xin = *self.parents[0];
        auto& gnode = *self.parents[1];
        auto& bnode = *self.parents[2];
        const T* xd = xin.data.data();
        const T* dy = self.grad.data();
        T* dx = xin.requires_grad ? xin.grad_buffer().data() : nullptr;
        T* dg = gnode.requires_grad ? gnode.grad_buffer().data() : nullptr;
        T* db = bnode.requires_grad ? bnode.grad_buffer().data() : nullptr;
        const auto len = static_cast<Eigen::Index>(plane);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T mu = mean[ch];
          double sum_dy = 0, sum_dy_xc = 0;  // xc = x - mean
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = (i * c + ch) * plane;
            const T* d = dy + off;
            const T* p = xd + off;
            sum_dy += lane_sum(plane, [d](std::size_t j) { return d[j]; });
            sum_dy_xc += lane_sum(plane, [d, p, mu](std::size_t j) { return d[j] * (p[j] - mu); });
          }
          const double is = invstd[ch];
          const double sum_dy_xhat = sum_dy_xc * is;
          if (dg) dg[ch] += static_cast<T>(sum_dy_xhat);
          if (db) db[ch] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const double g = gnode.data[ch];
          // train: dx = g*is/M * (M*dy - sum(dy) - xhat*sum(dy*xhat)) = a*dy + b*(x-mean) + k
          const double m = static_cast<double>(count);
          const T a = static_cast<T>(g * is);
          const T b = train ? static_cast<T>(-g * is * is * sum_dy_xhat / m) : T{0};
          const T k = train ? static_cast<T>(-g * is * sum_dy / m) : T{0};
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = (i * c + ch) * plane;
            ConstArr<T> d(dy + off, len), p(xd + off, len);
            MutArr<T> o(dx + off, len);
            if (train) {
              o += a * d + b * (p - mu) + k;
            } else {
              o += a * d;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T{0} ? xd[i] : T{0};
  return Tensor<T>::make_result("relu", x.shape(), std::move(out), {x}, [](TensorNode<T>& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    const T* x = p.data.data();
    const T* d = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > T{0} ? d[i] : T{0};
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return Tensor<T>::make_result("add", a.shape(), std::move(out), {a, b}, [](TensorNode<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.size() < 2) throw DimensionError("concat_channels: rank must be >= 2");
  std::size_t total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size() && s[0] == first[0];
    for (std::size_t i = 2; ok && i < s.size(); ++i) ok = s[i] == first[i];
    if (!ok) throw DimensionError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(first));
    total_c += s[1];
  }
  const std::size_t n = first[0];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[1] = total_c;
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> widths;
  std::vector<Tensor<T>> parents;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t block = p.dim(1) * inner;
      std::copy_n(p.data().data() + i * block, block, out.data() + i * total_c * inner + offset);
      offset += block;
    }
  }
  for (const auto& p : parts) {
    widths.push_back(p.dim(1) * inner);
    parents.push_back(p);
  }
  return Tensor<T>::make_result(
      "concat_channels", std::move(out_shape), std::move(out), std::move(parents),
      [n, total = total_c * inner, widths = std::move(widths)](TensorNode<T>& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          auto& p = *self.parents[k];
          if (p.requires_grad) {
            auto g = p.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
              const T* src = self.grad.data() + i * total + offset;
              T* dst = g.data() + i * widths[k];
              for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
            }
          }
          offset += widths[k];
        }
      });
}

namespace {

struct Interp {
  std::size_t i0, i1;
  double l;
};

std::vector<Interp> interp_table(std::size_t in, std::size_t out) {
  std::vector<Interp> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 >= in - 1) {
      t[o] = {in - 1, in - 1, 0.0};
    } else {
      t[o] = {i0, i0 + 1, src - static_cast<double>(i0)};
    }
  }
  return t;
}

}  // namespace

// Separable: a horizontal pass into [planes, in_h, out_w], then each output
// row is a blend of two intermediate rows.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  const Nchw in = as_nchw(input.shape(), "resize_bilinear");
  if (out_h == 0 || out_w == 0) throw ConfigError("resize_bilinear: output size must be positive");
  auto ty = interp_table(in.h, out_h);
  auto tx = interp_table(in.w, out_w);
  const std::size_t planes = in.n * in.c;
  std::vector<T> tmp(in.h * out_w);
  std::vector<T> out(planes * out_h * out_w);
  const T* x = input.data().data();
  const auto ow = static_cast<Eigen::Index>(out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * in.h * in.w;
    for (std::size_t r = 0; r < in.h; ++r) {
      const T* row = src + r * in.w;
      T* t = tmp.data() + r * out_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        t[ox] = static_cast<T>(row[b.i0] * (1 - b.l) + row[b.i1] * b.l);
      }
    }
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      MutArr<T>(dst + oy * out_w, ow) = ConstArr<T>(tmp.data() + a.i0 * out_w, ow) * static_cast<T>(1 - a.l) +
                                        ConstArr<T>(tmp.data() + a.i1 * out_w, ow) * static_cast<T>(a.l);
    }
  }
  return Tensor<T>::make_result(
      "resize_bilinear", make_shape(in, in.c, out_h, out_w), std::move(out), {input},
      [planes, ih = in.h, iw = in.w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](TensorNode<T>& self) {
        auto g = self.parents[0]->grad_buffer();
        const auto ow = static_cast<Eigen::Index>(out_w);
        std::vector<T> dtmp(ih * out_w);
        for (std::size_t p = 0; p < planes; ++p) {
          std::fill(dtmp.begin(), dtmp.end(), T{0});
          const T* src = self.grad.data() + p * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[oy];
            ConstArr<T> d(src + oy * out_w, ow);
            MutArr<T>(dtmp.data() + a.i0 * out_w, ow) += d * static_cast<T>(1 - a.l);
            MutArr<T>(dtmp.data() + a.i1 * out_w, ow) += d * static_cast<T>(a.l);
          }
          T* dst = g.data() + p * ih * iw;
          for (std::size_t r = 0; r < ih; ++r) {
            const T* t = dtmp.data() + r * out_w;
            T* row = dst + r * iw;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& b = tx[ox];
              row[b.i0] += static_cast<T>(t[ox] * (1 - b.l));
              row[b.i1] += static_cast<T>(t[ox] * b.l);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::size_t factor) {
  if (factor < 2) throw ConfigError("bilinear_upsample: factor must be >= 2, got " + std::to_string(factor));
  const Nchw in = as_nchw(input.shape(), "bilinear_upsample");
  return resize_bilinear(input, in.h * factor, in.w * factor);
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  const Nchw in = as_nchw(input.shape(), "adaptive_avg_pool");
  if (out_h == 0 || out_w == 0) throw ConfigError("adaptive_avg_pool: output dims must be positive");
  if (out_h > in.h || out_w > in.w) {
    throw ConfigError("adaptive_avg_pool: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " larger than input " + std::to_string(in.h) + "x" + std::to_string(in.w));
  }
  auto bounds = [](std::size_t extent, std::size_t bins) {
    std::vector<std::size_t> b(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) b[i] = i * extent / bins;
    return b;
  };
  auto by = bounds(in.h, out_h);
  auto bx = bounds(in.w, out_w);
  const std::size_t planes = in.n * in.c;
  std::vector<T> out(planes * out_h * out_w);
  const T* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * in.h * in.w;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        double s = 0;
        for (std::size_t y = by[i]; y < by[i + 1]; ++y) {
          for (std::size_t xx = bx[j]; xx < bx[j + 1]; ++xx) s += src[y * in.w + xx];
        }
        const double cnt = static_cast<double>((by[i + 1] - by[i]) * (bx[j + 1] - bx[j]));
        out[(p * out_h + i) * out_w + j] = static_cast<T>(s / cnt);
      }
    }
  }
  return Tensor<T>::make_result(
      "adaptive_avg_pool", make_shape(in, in.c, out_h, out_w), std::move(out), {input},
      [planes, ih = in.h, iw = in.w, out_h, out_w, by = std::move(by), bx = std::move(bx)](TensorNode<T>& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          T* dst = g.data() + p * ih * iw;
          for (std::size_t i = 0; i < out_h; ++i) {
            for (std::size_t j = 0; j < out_w; ++j) {
              const double cnt = static_cast<double>((by[i + 1] - by[i]) * (bx[j + 1] - bx[j]));
              const T d = static_cast<T>(self.grad[(p * out_h + i) * out_w + j] / cnt);
              for (std::size_t y = by[i]; y < by[i + 1]; ++y) {
                for (std::size_t xx = bx[j]; xx < bx[j + 1]; ++xx) dst[y * iw + xx] += d;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t n = input.dim(0), fin = input.dim(1), fout = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != fout)) {
    throw DimensionError("linear: bias must be [" + std::to_string(fout) + "], got " + shape_str(bias.shape()));
  }
  std::vector<T> out(n * fout);
  ConstMap<T> xm(input.data().data(), n, fin);
  ConstMap<T> wm(weight.data().data(), fout, fin);
  MutMap<T> om(out.data(), n, fout);
  om.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < fout; ++j) out[i * fout + j] += bias.data()[j];
    }
  }
  std::vector<Tensor<T>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<T>::make_result("linear", {n, fout}, std::move(out), std::move(parents),
                                [n, fin, fout](TensorNode<T>& self) {
                                  ConstMap<T> dy(self.grad.data(), n, fout);
                                  auto& xin = *self.parents[0];
                                  auto& wn = *self.parents[1];
                                  if (xin.requires_grad) {
                                    MutMap<T> dx(xin.grad_buffer().data(), n, fin);
                                    ConstMap<T> wm(wn.data.data(), fout, fin);
                                    dx.noalias() += dy * wm;
                                  }
                                  if (wn.requires_grad) {
                                    MutMap<T> dw(wn.grad_buffer().data(), fout, fin);
                                    ConstMap<T> xm(xin.data.data(), n, fin);
                                    dw.noalias() += dy.transpose() * xm;
                                  }
                                  if (wants_grad(self, 2)) {
                                    auto db = self.parents[2]->grad_buffer();
                                    for (std::size_t i = 0; i < n; ++i) {
                                      for (std::size_t j = 0; j < fout; ++j) db[j] += self.grad[i * fout + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("flatten: rank-0 tensor");
  return x.reshape({x.dim(0), x.numel() / x.dim(0)});
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                const CrossEntropyOptions& opt) {
  if (logits.rank() != 2 && logits.rank() != 4) {
    throw DimensionError("softmax_cross_entropy: logits must be [N,C] or [N,C,H,W], got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const std::size_t inner = logits.rank() == 4 ? logits.dim(2) * logits.dim(3) : 1;
  if (targets.size() != n * inner) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n * inner) + " entries");
  }
  if (!opt.class_weights.empty() && opt.class_weights.size() != c) {
    throw ConfigError("softmax_cross_entropy: class_weights has " + std::to_string(opt.class_weights.size()) +
                      " entries for C=" + std::to_string(c));
  }
  const T* z = logits.data().data();
  std::vector<T> prob(logits.numel());
  double total = 0, weight_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < inner; ++p) {
      const std::size_t base = i * c * inner + p;
      double mx = z[base];
      for (std::size_t k = 1; k < c; ++k) mx = std::max<double>(mx, z[base + k * inner]);
      double se = 0;
      for (std::size_t k = 0; k < c; ++k) se += std::exp(z[base + k * inner] - mx);
      for (std::size_t k = 0; k < c; ++k) prob[base + k * inner] = static_cast<T>(std::exp(z[base + k * inner] - mx) / se);
      const std::int32_t t = targets[i * inner + p];
      if (opt.ignore_label && t == *opt.ignore_label) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= c) {
        throw InputError("softmax_cross_entropy: label " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");
      }
      const double w = opt.class_weights.empty() ? 1.0 : opt.class_weights[static_cast<std::size_t>(t)];
      total += w * (std::log(se) + mx - z[base + static_cast<std::size_t>(t) * inner]);
      weight_sum += w;
    }
  }
  if (weight_sum <= 0) throw InputError("softmax_cross_entropy: every entry is ignored, loss undefined");
  const double loss = total / weight_sum;
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return Tensor<T>::make_result(
      "softmax_cross_entropy", {}, {static_cast<T>(loss)}, {logits},
      [n, c, inner, weight_sum, tg = std::move(tg), prob = std::move(prob), opt](TensorNode<T>& self) {
        auto g = self.parents[0]->grad_buffer();
        const double go = self.grad[0];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t p = 0; p < inner; ++p) {
            const std::int32_t t = tg[i * inner + p];
            if (opt.ignore_label && t == *opt.ignore_label) continue;
            const double w = opt.class_weights.empty() ? 1.0 : opt.class_weights[static_cast<std::size_t>(t)];
            const double s = go * w / weight_sum;
            const std::size_t base = i * c * inner + p;
            for (std::size_t k = 0; k < c; ++k) {
              const double onehot = static_cast<std::size_t>(t) == k ? 1.0 : 0.0;
              g[base + k * inner] += static_cast<T>(s * (prob[base + k * inner] - onehot));
            }
          }
        }
      });
}

template <typename T>
std::vector<T> softmax(std::span<const T> z) {
  std::vector<T> out(z.size());
  if (z.empty()) return out;
  double mx = z[0];
  for (auto v : z) mx = std::max<double>(mx, v);
  double se = 0;
  for (auto v : z) se += std::exp(v - mx);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<T>(std::exp(z[i] - mx) / se);
  return out;
}

template <typename T>
std::vector<T> softmax_channels(const Tensor<T>& logits) {
  if (logits.rank() != 2 && logits.rank() != 4) throw DimensionError("softmax_channels: bad rank");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const std::size_t inner = logits.rank() == 4 ? logits.dim(2) * logits.dim(3) : 1;
  std::vector<T> out(logits.numel());
  const T* z = logits.data().data();
  std::vector<double> e(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < inner; ++p) {
      const std::size_t base = i * c * inner + p;
      double mx = z[base];
      for (std::size_t k = 1; k < c; ++k) mx = std::max<double>(mx, z[base + k * inner]);
      double se = 0;
      for (std::size_t k = 0; k < c; ++k) se += (e[k] = std::exp(z[base + k * inner] - mx));
      for (std::size_t k = 0; k < c; ++k) out[base + k * inner] = static_cast<T>(e[k] / se);
    }
  }
  return out;
}

#define YNET_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dOptions&);  \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,         \
                                   Tensor<T>&, BnMode, double, double);                                      \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                                         \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> adaptive_avg_pool<T>(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> flatten<T>(const Tensor<T>&);                                                           \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const std::int32_t>,               \
                                              const CrossEntropyOptions&);                                   \
  template std::vector<T> softmax<T>(std::span<const T>);                                                    \
  template std::vector<T> softmax_channels<T>(const Tensor<T>&);

YNET_INSTANTIATE_OPS(float)
YNET_INSTANTIATE_OPS(double)

}  // namespace ynet::ops
