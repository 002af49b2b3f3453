#include "stereoagg/model.hpp"

namespace stereoagg {

template <typename Scalar>
StereoModel<Scalar>::StereoModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0));
  init_backbone(config_.backbone, params_, rng);
  init_aggregation(config_.aggregation, config_.backbone.image_channels, params_, rng);
}

template <typename Scalar>
StereoModel<Scalar>::StereoModel(ModelConfig config, ParameterSet<Scalar> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  // Compare against a freshly initialized layout so that missing, extra or
  // reshaped entries are reported by name.
  StereoModel reference(config_, 0);
  for (const auto& [name, t] : reference.params().tensors()) {
    if (!params_.contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
    if (params_.at(name).shape() != t.shape()) {
      throw ConfigError("parameter " + name + " has shape " + shape_string(params_.at(name).shape()) +
                        ", model expects " + shape_string(t.shape()));
    }
  }
  for (const auto& [name, t] : params_.tensors()) {
    if (!reference.params().contains(name)) throw ConfigError("unexpected parameter " + name);
  }
  for (const auto& [name, s] : reference.params().norms()) {
    if (!params_.norms().count(name)) params_.norms().emplace(name, s);
  }
}

template <typename Scalar>
ForwardResult<Scalar> StereoModel<Scalar>::forward(const Tensor<Scalar>& left, const Tensor<Scalar>& right,
                                                   Mode mode) {
  return forward(left, right, mode, config_.aggregation);
}

template <typename Scalar>
ForwardResult<Scalar> StereoModel<Scalar>::forward(const Tensor<Scalar>& left, const Tensor<Scalar>& right, Mode mode,
                                                   const AggregationConfig& aggregation) {
  ForwardResult<Scalar> r;
  const BackboneConfig& b = config_.backbone;
  r.features = extract_features(left, right, params_, b, mode);
  r.volume = build_feature_volume(r.features.base, r.features.shift, b.half_disparity(), b.shift);
  r.cost = compute_cost_volume(r.volume, params_, b, mode);
  r.aggregated = aggregate(r.cost, left, params_, aggregation);
  r.disparity = soft_argmin(r.aggregated);
  return r;
}

template <typename Scalar>
Tensor<Scalar> StereoModel<Scalar>::predict(const Image& left, const Image& right, Mode mode) {
  NoGradGuard guard;
  return forward(to_tensor<Scalar>(left), to_tensor<Scalar>(right), mode).disparity;
}

template <typename Scalar>
void StereoModel<Scalar>::freeze_unused() {
  const AggregationConfig& a = config_.aggregation;
  for (auto& [name, t] : params_.tensors()) {
    const bool unused = (a.disable_aggregation && name.rfind("agg.", 0) == 0) ||
                        (a.disable_guidance && name.rfind("agg.guide.", 0) == 0) ||
                        (a.disable_proposal && name.rfind("agg.prop.", 0) == 0);
    t.set_requires_grad(!unused);
  }
}

template <typename Scalar>
void calibrate_batch_norm(StereoModel<Scalar>& model, const std::vector<StereoSample>& samples) {
  NoGradGuard guard;
  for (const auto& s : samples) model.forward(to_tensor<Scalar>(s.left), to_tensor<Scalar>(s.right), Mode::train);
}

template class StereoModel<float>;
template class StereoModel<double>;
template void calibrate_batch_norm(StereoModel<float>&, const std::vector<StereoSample>&);
template void calibrate_batch_norm(StereoModel<double>&, const std::vector<StereoSample>&);

}  // namespace stereoagg
