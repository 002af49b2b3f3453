#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stereoagg/image.hpp"
#include "stereoagg/ops.hpp"

namespace stereoagg {

// D(h,w) = sum_d d * softmax_d(-C(d,h,w)). [D,H,W] -> [H,W]
template <typename Scalar>
Tensor<Scalar> soft_argmin(const Tensor<Scalar>& cost);

template <typename Scalar>
struct L1Loss {
  Tensor<Scalar> total;  // sum over valid pixels, differentiable
  Scalar per_pixel = 0;  // total / valid
  Index valid = 0;
};

// mask is [H,W] with 1 for valid pixels and 0 elsewhere.
template <typename Scalar>
L1Loss<Scalar> l1_loss(const Tensor<Scalar>& predicted, const Tensor<Scalar>& truth, const Tensor<Scalar>& mask);

struct MetricsReport {
  double err_gt_1px = 0;  // percent of valid pixels
  double err_gt_3px = 0;
  double mae = 0;         // pixels
  double eval_time = 0;   // seconds per image
  Index valid_pixels = 0;

  // One-line key=value record.
  std::string to_record() const;
};

MetricsReport evaluate(const DisparityMap& predicted, const DisparityMap& truth, const ValidityMask& mask,
                       double eval_seconds = 0.0);

// Pools per-image reports, weighting error rates and MAE by valid-pixel
// count and averaging time per image. Reduction order is the input order.
MetricsReport pool_reports(const std::vector<MetricsReport>& reports);

using ReportRow = std::pair<std::string, MetricsReport>;

// Aligned text table: model, error>1px, error>3px, MAE(px), T(ms).
std::string format_table(const std::vector<ReportRow>& rows);

}  // namespace stereoagg
