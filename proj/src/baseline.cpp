#include "stereoagg/baseline.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <vector>

namespace stereoagg {

void BaselineConfig::validate() const {
  if (census_window < 1 || census_window % 2 == 0) throw ConfigError("baseline.census_window: must be odd and >= 1");
  if (census_window > 11) throw ConfigError("baseline.census_window: must be <= 11");
  if (aggregation_window < 1 || aggregation_window % 2 == 0) {
    throw ConfigError("baseline.aggregation_window: must be odd and >= 1");
  }
  if (max_disparity < 1) throw ConfigError("baseline.max_disparity: must be >= 1");
}

namespace {

using Code = std::vector<std::uint64_t>;

// Census code split in 64-bit words, bit k for the k-th neighbor in scan order.
std::vector<Code> census_codes(const Image& image, Index window) {
  const Index r = window / 2;
  const Index bits = window * window;
  const auto words = static_cast<std::size_t>((bits + 63) / 64);
  std::vector<Code> codes(static_cast<std::size_t>(image.height * image.width), Code(words, 0));
  for (Index h = 0; h < image.height; ++h)
    for (Index w = 0; w < image.width; ++w) {
      Code& code = codes[static_cast<std::size_t>(h * image.width + w)];
      const float center = image.at(h, w);
      Index k = 0;
      for (Index dh = -r; dh <= r; ++dh)
        for (Index dw = -r; dw <= r; ++dw, ++k) {
          if (dh == 0 && dw == 0) continue;
          const Index y = h + dh;
          const Index x = w + dw;
          if (y < 0 || y >= image.height || x < 0 || x >= image.width) continue;
          if (image.at(y, x) > center) code[static_cast<std::size_t>(k / 64)] |= std::uint64_t{1} << (k % 64);
        }
    }
  return codes;
}

}  // namespace

Tensor<double> census_cost(const Image& left, const Image& right, const BaselineConfig& config) {
  config.validate();
  if (left.channels != 1 || right.channels != 1 || left.height != right.height || left.width != right.width) {
    throw ContractViolation("census_cost expects two grayscale images of equal size");
  }
  const auto lc = census_codes(left, config.census_window);
  const auto rc = census_codes(right, config.census_window);
  const Index height = left.height;
  const Index width = left.width;
  const double worst = static_cast<double>(config.census_window * config.census_window - 1);
  ArrayX<double> v(config.max_disparity * height * width);
  for (Index d = 0; d < config.max_disparity; ++d)
    for (Index h = 0; h < height; ++h)
      for (Index w = 0; w < width; ++w) {
        double cost = worst;
        if (w - d >= 0) {
          const Code& a = lc[static_cast<std::size_t>(h * width + w)];
          const Code& b = rc[static_cast<std::size_t>(h * width + w - d)];
          int distance = 0;
          for (std::size_t i = 0; i < a.size(); ++i) distance += std::popcount(a[i] ^ b[i]);
          cost = distance;
        }
        v[(d * height + h) * width + w] = cost;
      }
  return Tensor<double>({config.max_disparity, height, width}, std::move(v));
}

template <typename Scalar>
Tensor<Scalar> box_aggregate(const Tensor<Scalar>& cost, Index window) {
  if (cost.rank() != 3) throw ContractViolation("box_aggregate expects [D,H,W]");
  if (window < 1 || window % 2 == 0) throw ContractViolation("box_aggregate window must be odd");
  const Index depth = cost.dim(0);
  const Index height = cost.dim(1);
  const Index width = cost.dim(2);
  const Index r = window / 2;
  // Direct window sums: exact for window 1 and free of the cancellation a
  // summed-area table would bring.
  const auto& v = cost.values();
  ArrayX<Scalar> out(cost.numel());
  for (Index d = 0; d < depth; ++d)
    for (Index h = 0; h < height; ++h)
      for (Index w = 0; w < width; ++w) {
        const Index y0 = std::max<Index>(0, h - r);
        const Index y1 = std::min<Index>(height, h + r + 1);
        const Index x0 = std::max<Index>(0, w - r);
        const Index x1 = std::min<Index>(width, w + r + 1);
        Scalar total = 0;
        for (Index y = y0; y < y1; ++y)
          for (Index x = x0; x < x1; ++x) total += v[(d * height + y) * width + x];
        out[(d * height + h) * width + w] = total / static_cast<Scalar>((y1 - y0) * (x1 - x0));
      }
  return Tensor<Scalar>(cost.shape(), std::move(out));
}

template <typename Scalar>
DisparityMap hard_wta(const Tensor<Scalar>& cost) {
  if (cost.rank() != 3) throw ContractViolation("hard_wta expects [D,H,W]");
  const Index depth = cost.dim(0);
  const Index height = cost.dim(1);
  const Index width = cost.dim(2);
  DisparityMap out(height, width);
  for (Index h = 0; h < height; ++h)
    for (Index w = 0; w < width; ++w) {
      Index best = 0;
      for (Index d = 1; d < depth; ++d) {
        if (cost[(d * height + h) * width + w] < cost[(best * height + h) * width + w]) best = d;
      }
      out(h, w) = static_cast<float>(best);
    }
  return out;
}

DisparityMap run_baseline(const Image& left, const Image& right, const BaselineConfig& config) {
  return hard_wta(box_aggregate(census_cost(left, right, config), config.aggregation_window));
}

Tensor<double> naive_conv_oracle(const Tensor<double>& input, const Tensor<double>& kernel, Triple stride, int dims,
                                 bool transpose, const Shape& output_shape) {
  if (dims != 2 && dims != 3) throw ConfigError("naive_conv_oracle: dims must be 2 or 3");
  if (input.rank() != dims + 1 || kernel.rank() != dims + 2) {
    throw ConfigError("naive_conv_oracle: rank mismatch");
  }
  for (Index i = 0; i < dims; ++i) {
    if (input.dim(i) > 9 || kernel.dim(i) > 9) throw ConfigError("naive_conv_oracle: extents above 9 not allowed");
  }
  // Lift 2D problems to a unit depth axis.
  const Index in_d = dims == 3 ? input.dim(0) : 1;
  const Index in_h = input.dim(dims - 2);
  const Index in_w = input.dim(dims - 1);
  const Index ci = input.dim(dims);
  const Index kd = dims == 3 ? kernel.dim(0) : 1;
  const Index kh = kernel.dim(dims - 2);
  const Index kw = kernel.dim(dims - 1);
  const Index co = kernel.dim(dims + 1);
  if (kernel.dim(dims) != ci) throw ConfigError("naive_conv_oracle: channel mismatch");
  const Index sd = dims == 3 ? stride[0] : 1;
  const Index sh = stride[1];
  const Index sw = stride[2];
  const Index pd = kd / 2;
  const Index ph = kh / 2;
  const Index pw = kw / 2;
  const auto& x = input.values();
  const auto& k = kernel.values();
  auto in_at = [&](Index d, Index h, Index w, Index c) { return x[((d * in_h + h) * in_w + w) * ci + c]; };
  auto k_at = [&](Index a, Index b, Index e, Index i, Index o) {
    return k[((((a * kh + b) * kw + e) * ci) + i) * co + o];
  };

  Index out_d, out_h, out_w;
  if (transpose) {
    if (dims != 3 || output_shape.size() != 4) throw ConfigError("naive_conv_oracle: transpose needs a 4-d output shape");
    out_d = output_shape[0];
    out_h = output_shape[1];
    out_w = output_shape[2];
  } else {
    out_d = (in_d + sd - 1) / sd;
    out_h = (in_h + sh - 1) / sh;
    out_w = (in_w + sw - 1) / sw;
  }
  std::vector<double> y(static_cast<std::size_t>(out_d * out_h * out_w * co), 0.0);
  auto y_at = [&](Index d, Index h, Index w, Index c) -> double& {
    return y[static_cast<std::size_t>(((d * out_h + h) * out_w + w) * co + c)];
  };

  if (!transpose) {
    for (Index od = 0; od < out_d; ++od)
      for (Index oh = 0; oh < out_h; ++oh)
        for (Index ow = 0; ow < out_w; ++ow)
          for (Index oc = 0; oc < co; ++oc) {
            double total = 0.0;
            for (Index a = 0; a < kd; ++a)
              for (Index b = 0; b < kh; ++b)
                for (Index e = 0; e < kw; ++e) {
                  const Index id = od * sd + a - pd;
                  const Index ih = oh * sh + b - ph;
                  const Index iw = ow * sw + e - pw;
                  if (id < 0 || id >= in_d || ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
                  for (Index ic = 0; ic < ci; ++ic) total += in_at(id, ih, iw, ic) * k_at(a, b, e, ic, oc);
                }
            y_at(od, oh, ow, oc) = total;
          }
  } else {
    for (Index id = 0; id < in_d; ++id)
      for (Index ih = 0; ih < in_h; ++ih)
        for (Index iw = 0; iw < in_w; ++iw)
          for (Index a = 0; a < kd; ++a)
            for (Index b = 0; b < kh; ++b)
              for (Index e = 0; e < kw; ++e) {
                const Index od = id * sd + a - pd;
                const Index oh = ih * sh + b - ph;
                const Index ow = iw * sw + e - pw;
                if (od < 0 || od >= out_d || oh < 0 || oh >= out_h || ow < 0 || ow >= out_w) continue;
                for (Index ic = 0; ic < ci; ++ic)
                  for (Index oc = 0; oc < co; ++oc) y_at(od, oh, ow, oc) += in_at(id, ih, iw, ic) * k_at(a, b, e, ic, oc);
              }
  }
  Shape shape = dims == 3 ? Shape{out_d, out_h, out_w, co} : Shape{out_h, out_w, co};
  ArrayX<double> values = Eigen::Map<const ArrayX<double>>(y.data(), static_cast<Index>(y.size()));
  return Tensor<double>(shape, std::move(values));
}

template Tensor<float> box_aggregate(const Tensor<float>&, Index);
template Tensor<double> box_aggregate(const Tensor<double>&, Index);
template DisparityMap hard_wta(const Tensor<float>&);
template DisparityMap hard_wta(const Tensor<double>&);

}  // namespace stereoagg
