#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "stereoagg/ops.hpp"
#include "stereoagg/random.hpp"

namespace stereoagg::testing {

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  ArrayX<Scalar> v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(scale * rng.normal());
  return Tensor<Scalar>(shape, std::move(v));
}

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  if (a.numel() == 0) return 0;
  return static_cast<double>((a.values() - b.values()).abs().maxCoeff());
}

// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stereoagg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace stereoagg::testing
