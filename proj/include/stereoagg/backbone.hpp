#pragma once

#include "stereoagg/parameters.hpp"

namespace stereoagg {

// Which target column pairs with reference column w at shift d.
enum class ShiftDirection {
  minus,  // S(h, (w - d) mod W)
  plus,   // S(h, (w + d) mod W)
};

struct BackboneConfig {
  Index features = 8;         // F
  Index max_disparity = 16;   // full-resolution disparity count
  Index residual_blocks = 2;
  Index encoder_levels = 2;
  Index height = 32;
  Index width = 32;
  Index image_channels = 1;
  ShiftDirection shift = ShiftDirection::minus;

  // Throws ConfigError naming the offending field.
  void validate() const;
  Index half_disparity() const { return max_disparity / 2; }
};

template <typename Scalar>
struct FeaturePair {
  Tensor<Scalar> base;   // left, [H/2, W/2, F]
  Tensor<Scalar> shift;  // right, [H/2, W/2, F]
};

template <typename Scalar>
void init_backbone(const BackboneConfig& config, ParameterSet<Scalar>& params, Rng& rng);

// Siamese residual feature extractor; both images go through the same
// weights (and share batch statistics in train mode).
template <typename Scalar>
FeaturePair<Scalar> extract_features(const Tensor<Scalar>& left, const Tensor<Scalar>& right,
                                     ParameterSet<Scalar>& params, const BackboneConfig& config, Mode mode);

// [d_half, H', W', 2F]: slice d is B concatenated with S shifted by d along
// the width axis with wrap-around.
template <typename Scalar>
Tensor<Scalar> build_feature_volume(const Tensor<Scalar>& base, const Tensor<Scalar>& shift, Index d_half,
                                    ShiftDirection direction = ShiftDirection::minus);

// 3D convolutional encoder-decoder mapping the feature volume to the
// full-resolution cost volume [D_max, H, W].
template <typename Scalar>
Tensor<Scalar> compute_cost_volume(const Tensor<Scalar>& volume, ParameterSet<Scalar>& params,
                                   const BackboneConfig& config, Mode mode);

}  // namespace stereoagg
