#pragma once

#include "stereoagg/image.hpp"
#include "stereoagg/ops.hpp"

namespace stereoagg {

struct BaselineConfig {
  Index census_window = 5;
  Index aggregation_window = 7;
  Index max_disparity = 8;

  void validate() const;
};

// Hamming distance between census codes of left(h,w) and right(h,w-d).
// A bit is set when the neighbor is brighter than the center; neighbors
// outside the frame contribute 0. Correspondences outside the frame get the
// maximal cost (window^2 - 1). Result is [D,H,W].
Tensor<double> census_cost(const Image& left, const Image& right, const BaselineConfig& config);

// Per-disparity mean over a window x window neighborhood, dividing by the
// number of in-frame samples.
template <typename Scalar>
Tensor<Scalar> box_aggregate(const Tensor<Scalar>& cost, Index window);

// Per-pixel argmin over d; ties go to the lowest d.
template <typename Scalar>
DisparityMap hard_wta(const Tensor<Scalar>& cost);

// census -> box -> hard WTA on grayscale images.
DisparityMap run_baseline(const Image& left, const Image& right, const BaselineConfig& config);

// Direct nested-loop reference for conv2d / conv3d / conv3d_transpose with
// the same layouts and zero padding as the tensor ops. Every spatial extent
// and kernel extent must be <= 9. `output_shape` is only used for transpose.
Tensor<double> naive_conv_oracle(const Tensor<double>& input, const Tensor<double>& kernel, Triple stride,
                                 int dims, bool transpose, const Shape& output_shape = {});

}  // namespace stereoagg
