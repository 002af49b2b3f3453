#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "stereoagg/tensor.hpp"

namespace stereoagg {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense per-pixel disparity in pixels.
using DisparityMap = Plane<float>;
// 1 where the ground truth is usable.
using ValidityMask = Plane<std::uint8_t>;

// Interleaved H x W x C image with values in [0, 1].
struct Image {
  Index height = 0;
  Index width = 0;
  Index channels = 1;
  Eigen::ArrayXf pixels;

  Image() = default;
  Image(Index h, Index w, Index c = 1) : height(h), width(w), channels(c), pixels(Eigen::ArrayXf::Zero(h * w * c)) {}

  float& at(Index h, Index w, Index c = 0) { return pixels[(h * width + w) * channels + c]; }
  float at(Index h, Index w, Index c = 0) const { return pixels[(h * width + w) * channels + c]; }

  bool operator==(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels && (pixels == o.pixels).all();
  }
};

template <typename Scalar>
Tensor<Scalar> to_tensor(const Image& image) {
  return Tensor<Scalar>({image.height, image.width, image.channels}, image.pixels.cast<Scalar>());
}

template <typename Scalar, typename Source>
Tensor<Scalar> plane_to_tensor(const Plane<Source>& plane) {
  ArrayX<Scalar> v(plane.size());
  for (Index h = 0; h < plane.rows(); ++h)
    for (Index w = 0; w < plane.cols(); ++w) v[h * plane.cols() + w] = static_cast<Scalar>(plane(h, w));
  return Tensor<Scalar>({plane.rows(), plane.cols()}, std::move(v));
}

template <typename Scalar>
DisparityMap to_disparity_map(const Tensor<Scalar>& t) {
  if (t.rank() != 2) throw ContractViolation("disparity tensor must be [H,W], got " + shape_string(t.shape()));
  DisparityMap map(t.dim(0), t.dim(1));
  for (Index i = 0; i < t.numel(); ++i) map(i / t.dim(1), i % t.dim(1)) = static_cast<float>(t[i]);
  return map;
}

}  // namespace stereoagg
