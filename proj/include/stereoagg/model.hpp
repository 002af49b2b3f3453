#pragma once

#include <cstdint>
#include <vector>

#include "stereoagg/aggregation.hpp"
#include "stereoagg/backbone.hpp"
#include "stereoagg/disparity.hpp"
#include "stereoagg/synth.hpp"

namespace stereoagg {

struct ModelConfig {
  BackboneConfig backbone;
  AggregationConfig aggregation;

  void validate() const {
    backbone.validate();
    aggregation.validate();
  }
};

template <typename Scalar>
struct ForwardResult {
  FeaturePair<Scalar> features;
  Tensor<Scalar> volume;      // [D/2, H/2, W/2, 2F]
  Tensor<Scalar> cost;        // C0, [D, H, W]
  Tensor<Scalar> aggregated;  // C_a, [D, H, W]
  Tensor<Scalar> disparity;   // [H, W]
};

// Backbone + two-stream aggregation + soft-argmin head.
template <typename Scalar>
class StereoModel {
 public:
  StereoModel(ModelConfig config, std::uint64_t seed);
  StereoModel(ModelConfig config, ParameterSet<Scalar> params);

  // Runs with the model's own aggregation settings.
  ForwardResult<Scalar> forward(const Tensor<Scalar>& left, const Tensor<Scalar>& right, Mode mode);
  // Same weights, alternative ablation switches.
  ForwardResult<Scalar> forward(const Tensor<Scalar>& left, const Tensor<Scalar>& right, Mode mode,
                                const AggregationConfig& aggregation);

  Tensor<Scalar> predict(const Image& left, const Image& right, Mode mode = Mode::eval);

  // Marks parameters that the active ablation never touches as frozen.
  void freeze_unused();

  const ModelConfig& config() const { return config_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }

 private:
  ModelConfig config_;
  ParameterSet<Scalar> params_;
};

// Train-mode forward passes without gradients, used to populate batch-norm
// running statistics of a model that has not been trained yet.
template <typename Scalar>
void calibrate_batch_norm(StereoModel<Scalar>& model, const std::vector<StereoSample>& samples);

extern template class StereoModel<float>;
extern template class StereoModel<double>;

}  // namespace stereoagg
