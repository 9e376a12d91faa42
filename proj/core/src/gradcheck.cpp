#include "metagnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metagnn {

namespace {

ParamList as_leaves(const ParamList& point) {
  ParamList leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(p.detach(true));
  return leaves;
}

}  // namespace

ParamList numerical_gradient(const ParamScalarFn& f, const ParamList& point,
                             double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference step <= 0");
  NoGradGuard no_grad;
  ParamList work;
  for (const auto& p : point) work.push_back(p.detach());
  ParamList result;
  for (std::size_t k = 0; k < work.size(); ++k) {
    std::vector<double> values(work[k].data().begin(), work[k].data().end());
    std::vector<double> slope(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      work[k] = Tensor(point[k].shape(), values);
      const double plus = f(work).item();
      values[i] = original - step;
      work[k] = Tensor(point[k].shape(), values);
      const double minus = f(work).item();
      values[i] = original;
      slope[i] = (plus - minus) / (2.0 * step);
    }
    work[k] = Tensor(point[k].shape(), values);
    result.emplace_back(point[k].shape(), std::move(slope));
  }
  return result;
}

double max_relative_error(const ParamList& analytic, const ParamList& numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("gradient lists differ in length");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const auto a = analytic[k].data();
    const auto n = numeric[k].data();
    if (a.size() != n.size()) {
      throw std::invalid_argument("gradient shapes differ");
    }
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      norm_a += a[i] * a[i];
      norm_n += n[i] * n[i];
    }
    const double err = std::sqrt(diff) /
                       std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_diff_check(const ParamScalarFn& f, const ParamList& point,
                         double step, const GradientFn& analytic) {
  const ParamList numeric = numerical_gradient(f, point, step);
  return max_relative_error(analytic(point), numeric);
}

double finite_diff_check(const ParamScalarFn& f, const ParamList& point,
                         double step) {
  return finite_diff_check(f, point, step, [&f](const ParamList& at) {
    GradModeGuard on(true);
    ParamList leaves = as_leaves(at);
    return grad(f(leaves), leaves);
  });
}

double finite_diff_check(const ScalarFn& f, const Tensor& point, double step) {
  return finite_diff_check(
      [&f](const ParamList& p) { return f(p[0]); }, ParamList{point}, step);
}

}  // namespace metagnn
