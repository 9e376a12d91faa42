#pragma once

// Finite-difference checks over every autodiff primitive, both graph layer
// types, the full classifier, and the second-order meta-gradient.

#include <cstdint>
#include <string>
#include <vector>

namespace metagnn {

struct GradcheckOptions {
  std::size_t seeds = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Tolerance of the meta-gradient probe.
  double meta_tolerance = 1e-3;
  /// Substring filter on check names; empty runs everything.
  std::string filter;
};

struct CheckResult {
  std::string name;
  /// "primitive", "layer", "model" or "meta".
  std::string group;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

std::vector<CheckResult> run_gradcheck_suite(const GradcheckOptions& options = {});

/// Meta-gradient probe on 2-parameter regression tasks, K = 1, second order:
/// largest relative error of meta_gradient against central differences of
/// meta_objective over `seeds` seeds.
double meta_gradient_probe(std::size_t seeds, double step, double gamma);

}  // namespace metagnn
