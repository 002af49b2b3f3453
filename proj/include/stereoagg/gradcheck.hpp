#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stereoagg/random.hpp"
#include "stereoagg/tensor.hpp"

namespace stereoagg {

// Central finite differences against the tape gradient, in double precision.
// Error measure per element: |analytic - numeric| / max(1, |numeric|).
inline constexpr double kFiniteDifferenceStep = 1e-4;
inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kComposedTolerance = 1e-3;

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// A probe whose central differences at `step` and `step / 10` disagree by
// more than the tolerance sits next to a kink (ReLU, max, |x|) and says
// nothing about the tape gradient; it is counted as skipped.
struct GradientComparison {
  double max_error = 0;
  Index probed = 0;
  Index skipped = 0;
};

// f maps the inputs to any tensor; it is contracted with a fixed random
// weight tensor to get a scalar. Up to `elements_per_input` entries of each
// input are probed.
GradientComparison compare_gradients(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs, Rng& rng,
                                     double tolerance, Index elements_per_input = 8,
                                     double step = kFiniteDifferenceStep);

struct GradCheckResult {
  std::string module;
  std::string name;
  Index instances = 0;
  double max_error = 0;
  double tolerance = 0;
  Index probed = 0;
  Index skipped = 0;

  // At most 5% of probes may be skipped as non-smooth.
  bool passed() const { return max_error < tolerance && skipped * 20 <= probed; }
  // "<name> pass instances=20 max_err=1.2e-09 tol=1e-04 probes=160 skipped=0"
  std::string to_line() const;
};

// Module names: tensor-autodiff, stereo-backbone, cost-aggregation,
// disparity-head. An empty filter runs everything.
std::vector<std::string> gradient_suite_modules();
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, const std::string& module = "",
                                                Index instances = 20);

}  // namespace stereoagg
