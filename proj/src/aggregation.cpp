#include "stereoagg/aggregation.hpp"

#include <string>
#include <vector>

namespace stereoagg {

namespace {

template <typename Scalar>
Tensor<Scalar> conv3d_bias(const Tensor<Scalar>& x, ParameterSet<Scalar>& p, const std::string& name) {
  return add(conv3d(x, p.at(name + ".w")), p.at(name + ".b"));
}

template <typename Scalar>
Tensor<Scalar> conv2d_bias(const Tensor<Scalar>& x, ParameterSet<Scalar>& p, const std::string& name) {
  return add(conv2d(x, p.at(name + ".w")), p.at(name + ".b"));
}

}  // namespace

void AggregationConfig::validate() const {
  if (proposals < 1) throw ConfigError("aggregation.proposals: must be >= 1");
  if (guidance_width < 1) throw ConfigError("aggregation.guidance_width: must be >= 1");
}

template <typename Scalar>
void init_aggregation(const AggregationConfig& c, Index image_channels, ParameterSet<Scalar>& p, Rng& rng) {
  c.validate();
  const Index g = c.proposals;
  const Index cg = c.guidance_width;
  p.add_kernel("agg.prop.depth.w", {3, 1, 1, 1, g}, rng);
  p.add_zeros("agg.prop.depth.b", {g});
  p.add_kernel("agg.prop.height.w", {1, 3, 1, g, g}, rng);
  p.add_zeros("agg.prop.height.b", {g});
  p.add_kernel("agg.prop.width.w", {1, 1, 3, g, g}, rng);
  p.add_zeros("agg.prop.width.b", {g});
  p.add_kernel("agg.prop.mix.w", {1, 1, 1, g, g}, rng);
  p.add_zeros("agg.prop.mix.b", {g});

  p.add_kernel("agg.guide.conv0.w", {5, 5, image_channels, cg}, rng);
  p.add_zeros("agg.guide.conv0.b", {cg});
  p.add_kernel("agg.guide.conv1.w", {3, 3, cg, cg}, rng);
  p.add_zeros("agg.guide.conv1.b", {cg});
  p.add_kernel("agg.guide.conv2.w", {1, 1, cg, g}, rng);
  p.add_zeros("agg.guide.conv2.b", {g});
}

template <typename Scalar>
Tensor<Scalar> generate_proposals(const Tensor<Scalar>& cost, ParameterSet<Scalar>& p) {
  if (cost.rank() != 3) throw ContractViolation("cost volume must be [D,H,W], got " + shape_string(cost.shape()));
  Tensor<Scalar> x = reshape(cost, {cost.dim(0), cost.dim(1), cost.dim(2), 1});
  x = relu(conv3d_bias(x, p, "agg.prop.depth"));
  x = relu(conv3d_bias(x, p, "agg.prop.height"));
  x = relu(conv3d_bias(x, p, "agg.prop.width"));
  return conv3d_bias(x, p, "agg.prop.mix");
}

template <typename Scalar>
Tensor<Scalar> guidance_logits(const Tensor<Scalar>& reference, ParameterSet<Scalar>& p) {
  if (reference.rank() != 3) {
    throw ContractViolation("reference image must be [H,W,C], got " + shape_string(reference.shape()));
  }
  Tensor<Scalar> x = relu(conv2d_bias(reference, p, "agg.guide.conv0"));
  x = relu(conv2d_bias(x, p, "agg.guide.conv1"));
  return conv2d_bias(x, p, "agg.guide.conv2");
}

template <typename Scalar>
Tensor<Scalar> extract_guidance(const Tensor<Scalar>& reference, ParameterSet<Scalar>& p) {
  return softmax(guidance_logits(reference, p), 2);
}

template <typename Scalar>
MaxResult<Scalar> fuse_with_winners(const Tensor<Scalar>& proposals, const Tensor<Scalar>& guidance) {
  if (proposals.rank() != 4 || guidance.rank() != 3 || guidance.dim(0) != proposals.dim(1) ||
      guidance.dim(1) != proposals.dim(2) || guidance.dim(2) != proposals.dim(3)) {
    throw ContractViolation("proposals " + shape_string(proposals.shape()) + " do not match guidance " +
                            shape_string(guidance.shape()));
  }
  return max_reduce(mul(proposals, guidance), 3);
}

template <typename Scalar>
Tensor<Scalar> aggregate(const Tensor<Scalar>& cost, const Tensor<Scalar>& reference, ParameterSet<Scalar>& p,
                         const AggregationConfig& config) {
  if (config.disable_aggregation) return cost;
  if (cost.rank() != 3 || reference.rank() != 3 || reference.dim(0) != cost.dim(1) ||
      reference.dim(1) != cost.dim(2)) {
    throw ContractViolation("reference " + shape_string(reference.shape()) + " does not match cost volume " +
                            shape_string(cost.shape()));
  }
  const Index g = config.proposals;
  Tensor<Scalar> proposals;
  if (config.disable_proposal) {
    const Tensor<Scalar> column = reshape(cost, {cost.dim(0), cost.dim(1), cost.dim(2), 1});
    proposals = concat(std::vector<Tensor<Scalar>>(static_cast<std::size_t>(g), column), 3);
  } else {
    proposals = generate_proposals(cost, p);
  }
  const Tensor<Scalar> guidance = config.disable_guidance ? uniform_guidance<Scalar>(cost.dim(1), cost.dim(2), g)
                                                          : extract_guidance(reference, p);
  return fuse(proposals, guidance);
}

template <typename Scalar>
Tensor<Scalar> guidance_mean(const Tensor<Scalar>& guidance) {
  return scale(sum(guidance, 2), Scalar(1) / static_cast<Scalar>(guidance.dim(2)));
}

#define STEREOAGG_INSTANTIATE_AGGREGATION(S)                                                                   \
  template void init_aggregation(const AggregationConfig&, Index, ParameterSet<S>&, Rng&);                      \
  template Tensor<S> generate_proposals(const Tensor<S>&, ParameterSet<S>&);                                    \
  template Tensor<S> guidance_logits(const Tensor<S>&, ParameterSet<S>&);                                       \
  template Tensor<S> extract_guidance(const Tensor<S>&, ParameterSet<S>&);                                      \
  template MaxResult<S> fuse_with_winners(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> aggregate(const Tensor<S>&, const Tensor<S>&, ParameterSet<S>&, const AggregationConfig&); \
  template Tensor<S> guidance_mean(const Tensor<S>&);

STEREOAGG_INSTANTIATE_AGGREGATION(float)
STEREOAGG_INSTANTIATE_AGGREGATION(double)

}  // namespace stereoagg
