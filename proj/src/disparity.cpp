#include "stereoagg/disparity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace stereoagg {

template <typename Scalar>
Tensor<Scalar> soft_argmin(const Tensor<Scalar>& cost) {
  if (cost.rank() != 3) throw ContractViolation("soft_argmin expects [D,H,W], got " + shape_string(cost.shape()));
  const Index depth = cost.dim(0);
  ArrayX<Scalar> levels(depth);
  for (Index d = 0; d < depth; ++d) levels[d] = static_cast<Scalar>(d);
  const Tensor<Scalar> weights({depth, 1, 1}, std::move(levels));
  return sum(mul(softmax(neg(cost), 0), weights), 0);
}

template <typename Scalar>
L1Loss<Scalar> l1_loss(const Tensor<Scalar>& predicted, const Tensor<Scalar>& truth, const Tensor<Scalar>& mask) {
  if (predicted.shape() != truth.shape() || predicted.shape() != mask.shape() || predicted.rank() != 2) {
    throw ContractViolation("l1_loss shapes " + shape_string(predicted.shape()) + ", " +
                            shape_string(truth.shape()) + ", " + shape_string(mask.shape()));
  }
  const auto valid = static_cast<Index>((mask.values() != Scalar(0)).count());
  if (valid == 0) throw ConfigError("l1_loss: validity mask selects no pixels");
  L1Loss<Scalar> out;
  out.total = sum(mul(abs(sub(predicted, truth)), mask));
  out.valid = valid;
  out.per_pixel = out.total.item() / static_cast<Scalar>(valid);
  return out;
}

MetricsReport evaluate(const DisparityMap& predicted, const DisparityMap& truth, const ValidityMask& mask,
                       double eval_seconds) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() || mask.rows() != truth.rows() ||
      mask.cols() != truth.cols()) {
    throw ContractViolation("evaluate: prediction, ground truth and mask extents differ");
  }
  Index valid = 0;
  Index over1 = 0;
  Index over3 = 0;
  double abs_sum = 0.0;
  for (Index h = 0; h < truth.rows(); ++h)
    for (Index w = 0; w < truth.cols(); ++w) {
      if (!mask(h, w)) continue;
      const double e = std::abs(static_cast<double>(predicted(h, w)) - static_cast<double>(truth(h, w)));
      ++valid;
      over1 += e > 1.0;
      over3 += e > 3.0;
      abs_sum += e;
    }
  if (valid == 0) throw ConfigError("evaluate: validity mask selects no pixels");
  MetricsReport r;
  r.valid_pixels = valid;
  r.err_gt_1px = 100.0 * static_cast<double>(over1) / static_cast<double>(valid);
  r.err_gt_3px = 100.0 * static_cast<double>(over3) / static_cast<double>(valid);
  r.mae = abs_sum / static_cast<double>(valid);
  r.eval_time = eval_seconds;
  return r;
}

MetricsReport pool_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ConfigError("no reports to pool");
  MetricsReport total;
  double over1 = 0;
  double over3 = 0;
  double abs_sum = 0;
  double seconds = 0;
  for (const auto& r : reports) {
    const auto n = static_cast<double>(r.valid_pixels);
    over1 += r.err_gt_1px * n;
    over3 += r.err_gt_3px * n;
    abs_sum += r.mae * n;
    seconds += r.eval_time;
    total.valid_pixels += r.valid_pixels;
  }
  const auto n = static_cast<double>(total.valid_pixels);
  total.err_gt_1px = over1 / n;
  total.err_gt_3px = over3 / n;
  total.mae = abs_sum / n;
  total.eval_time = seconds / static_cast<double>(reports.size());
  return total;
}

std::string MetricsReport::to_record() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "err_gt_1px=%.4f err_gt_3px=%.4f mae=%.6f eval_time=%.6f valid=%lld", err_gt_1px,
                err_gt_3px, mae, eval_time, static_cast<long long>(valid_pixels));
  return buf;
}

std::string format_table(const std::vector<ReportRow>& rows) {
  const std::vector<std::string> header{"model", "error>1px", "error>3px", "MAE(px)", "T(ms)"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows) {
    char a[32], b[32], c[32], d[32];
    std::snprintf(a, sizeof a, "%.2f", r.err_gt_1px);
    std::snprintf(b, sizeof b, "%.2f", r.err_gt_3px);
    std::snprintf(c, sizeof c, "%.3f", r.mae);
    std::snprintf(d, sizeof d, "%.2f", r.eval_time * 1000.0);
    cells.push_back({name, a, b, c, d});
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], row[k].size());
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      const std::string pad(widths[k] - row[k].size(), ' ');
      if (k == 0) {
        out << row[k] << pad;
      } else {
        out << "  " << pad << row[k];
      }
    }
    out << '\n';
  }
  return out.str();
}

template Tensor<float> soft_argmin(const Tensor<float>&);
template Tensor<double> soft_argmin(const Tensor<double>&);
template L1Loss<float> l1_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template L1Loss<double> l1_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace stereoagg
