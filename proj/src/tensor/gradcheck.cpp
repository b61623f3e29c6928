#include "ynet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ynet/rng.hpp"

namespace ynet {

namespace {

double projected(const Tensord& y, const std::vector<double>& r) {
  double s = 0;
  const auto d = y.data();
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * r[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const std::function<Tensord()>& fn,
                           std::vector<Tensord> wrt, const GradCheckOptions& opt) {
  GradCheckReport report;
  report.name = name;
  report.tolerance = opt.tolerance;

  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensord y = fn();
  Rng rng(opt.seed);
  std::vector<double> r(y.numel());
  for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  y.backward(r);

  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
    t.zero_grad();
  }

  NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto data = wrt[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + opt.step;
      const double fp = projected(fn(), r);
      data[i] = orig - opt.step;
      const double fm = projected(fn(), r);
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
      ++report.elements_checked;
    }
  }
  report.passed = report.max_rel_error <= opt.tolerance;
  return report;
}

void require_passed(const GradCheckReport& report) {
  if (report.passed) return;
  std::ostringstream os;
  os << "gradient check failed for '" << report.name << "': max relative error " << report.max_rel_error
     << " exceeds " << report.tolerance;
  throw NumericError(os.str());
}

}  // namespace ynet
