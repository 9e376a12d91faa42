#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metagnn/tensor.hpp"

namespace metagnn {

using ScalarFn = std::function<Tensor(const Tensor&)>;
using ParamScalarFn = std::function<Tensor(const ParamList&)>;
using GradientFn = std::function<ParamList(const ParamList&)>;

/// Central-difference gradient of a scalar function, one coordinate at a time.
/// Evaluated with grad mode off.
ParamList numerical_gradient(const ParamScalarFn& f, const ParamList& point,
                             double step);

/// Largest per-tensor ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// (L2 norms), where the analytic gradient comes from reverse-mode
/// differentiation of `f`.
double finite_diff_check(const ScalarFn& f, const Tensor& point, double step);
double finite_diff_check(const ParamScalarFn& f, const ParamList& point,
                         double step);

/// Same comparison against a caller-supplied analytic gradient.
double finite_diff_check(const ParamScalarFn& f, const ParamList& point,
                         double step, const GradientFn& analytic);

double max_relative_error(const ParamList& analytic, const ParamList& numeric);

}  // namespace metagnn
