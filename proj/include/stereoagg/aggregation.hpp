#pragma once

#include "stereoagg/parameters.hpp"

namespace stereoagg {

struct AggregationConfig {
  Index proposals = 4;        // G
  Index guidance_width = 16;  // hidden channels of the guidance stream
  bool disable_guidance = false;
  bool disable_proposal = false;
  bool disable_aggregation = false;

  void validate() const;
};

template <typename Scalar>
void init_aggregation(const AggregationConfig& config, Index image_channels, ParameterSet<Scalar>& params, Rng& rng);

// Proposal stream: depth, height and width rectangle filters (each followed
// by ReLU) and a linear 1x1x1 mixing layer. C0 [D,H,W] -> [D,H,W,G].
template <typename Scalar>
Tensor<Scalar> generate_proposals(const Tensor<Scalar>& cost, ParameterSet<Scalar>& params);

// Guidance stream before the softmax: reference [H,W,C] -> [H,W,G].
template <typename Scalar>
Tensor<Scalar> guidance_logits(const Tensor<Scalar>& reference, ParameterSet<Scalar>& params);

// Per-pixel probabilities over the G proposals.
template <typename Scalar>
Tensor<Scalar> extract_guidance(const Tensor<Scalar>& reference, ParameterSet<Scalar>& params);

// C_a(d,h,w) = max_g C_p(d,h,w,g) * C_g(h,w,g); `indices` holds the winning g.
template <typename Scalar>
MaxResult<Scalar> fuse_with_winners(const Tensor<Scalar>& proposals, const Tensor<Scalar>& guidance);

template <typename Scalar>
Tensor<Scalar> fuse(const Tensor<Scalar>& proposals, const Tensor<Scalar>& guidance) {
  return fuse_with_winners(proposals, guidance).values;
}

// Uniform 1/G guidance for an H x W reference.
template <typename Scalar>
Tensor<Scalar> uniform_guidance(Index height, Index width, Index proposals) {
  return Tensor<Scalar>::constant({height, width, proposals}, Scalar(1) / static_cast<Scalar>(proposals));
}

// Full two-stream aggregation honoring the ablation switches.
template <typename Scalar>
Tensor<Scalar> aggregate(const Tensor<Scalar>& cost, const Tensor<Scalar>& reference, ParameterSet<Scalar>& params,
                         const AggregationConfig& config);

// Mean over the trailing G axis: [H,W,G] -> [H,W].
template <typename Scalar>
Tensor<Scalar> guidance_mean(const Tensor<Scalar>& guidance);

}  // namespace stereoagg
