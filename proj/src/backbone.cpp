#include "stereoagg/backbone.hpp"

#include <string>
#include <vector>

namespace stereoagg {

namespace {

std::string level_name(const char* stem, Index level) { return std::string(stem) + std::to_string(level); }

// Channel width of encoder level l (0 is the half-resolution entry level).
Index level_channels(const BackboneConfig& c, Index level) {
  if (level == 0) return c.features;
  return level == c.encoder_levels ? 4 * c.features : 2 * c.features;
}

template <typename Scalar>
Tensor<Scalar> norm_relu(const Tensor<Scalar>& x, ParameterSet<Scalar>& p, const std::string& name, Mode mode) {
  return relu(batch_norm(x, p.at(name + ".bn.gamma"), p.at(name + ".bn.beta"), mode, p.norm(name + ".bn")));
}

// 2D convolution applied independently to each slice of a [N,H,W,C] batch.
template <typename Scalar>
Tensor<Scalar> batched_conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, Index stride) {
  Shape k = kernel.shape();
  k.insert(k.begin(), 1);
  return conv3d(x, reshape(kernel, k), {1, stride, stride});
}

template <typename Scalar>
Tensor<Scalar> feature_layer(const Tensor<Scalar>& x, ParameterSet<Scalar>& p, const std::string& name, Index stride,
                             Mode mode) {
  return norm_relu(batched_conv2d(x, p.at(name + ".w"), stride), p, name, mode);
}

template <typename Scalar>
Tensor<Scalar> volume_layer(const Tensor<Scalar>& x, ParameterSet<Scalar>& p, const std::string& name, Index stride,
                            Mode mode) {
  return norm_relu(conv3d(x, p.at(name + ".w"), {stride, stride, stride}), p, name, mode);
}

}  // namespace

void BackboneConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (features < 1) fail("backbone.features", "must be >= 1");
  if (residual_blocks < 0) fail("backbone.residual_blocks", "must be >= 0");
  if (encoder_levels < 1) fail("backbone.encoder_levels", "must be >= 1");
  if (encoder_levels > 8) fail("backbone.encoder_levels", "must be <= 8");
  if (image_channels != 1 && image_channels != 3) fail("backbone.image_channels", "must be 1 or 3");
  const Index unit = Index{1} << (encoder_levels + 1);
  if (height < unit || height % unit != 0) fail("backbone.height", "must be a positive multiple of " + std::to_string(unit));
  if (width < unit || width % unit != 0) fail("backbone.width", "must be a positive multiple of " + std::to_string(unit));
  if (max_disparity < unit || max_disparity % unit != 0) {
    fail("backbone.max_disparity", "must be a positive multiple of " + std::to_string(unit));
  }
  if (half_disparity() > width / 2) fail("backbone.max_disparity", "half-resolution shift exceeds feature width");
}

template <typename Scalar>
void init_backbone(const BackboneConfig& c, ParameterSet<Scalar>& p, Rng& rng) {
  c.validate();
  const Index f = c.features;
  p.add_kernel("feat.conv0.w", {5, 5, c.image_channels, f}, rng);
  p.add_norm("feat.conv0.bn", f);
  for (Index b = 0; b < c.residual_blocks; ++b) {
    for (const char* half : {".conv0", ".conv1"}) {
      const std::string name = level_name("feat.res", b) + half;
      p.add_kernel(name + ".w", {3, 3, f, f}, rng);
      p.add_norm(name + ".bn", f);
    }
  }
  p.add_kernel("feat.out.w", {3, 3, f, f}, rng);
  p.add_zeros("feat.out.b", {f});

  p.add_kernel("cost.pre0.w", {3, 3, 3, 2 * f, f}, rng);
  p.add_norm("cost.pre0.bn", f);
  p.add_kernel("cost.pre1.w", {3, 3, 3, f, f}, rng);
  p.add_norm("cost.pre1.bn", f);
  for (Index l = 1; l <= c.encoder_levels; ++l) {
    const Index in = level_channels(c, l - 1);
    const Index out = level_channels(c, l);
    for (Index k = 0; k < 3; ++k) {
      const std::string name = level_name("cost.enc", l) + level_name(".conv", k);
      p.add_kernel(name + ".w", {3, 3, 3, k == 0 ? in : out, out}, rng);
      p.add_norm(name + ".bn", out);
    }
    const std::string dec = level_name("cost.dec", l);
    p.add_kernel(dec + ".w", {3, 3, 3, out, in}, rng);
    p.add_norm(dec + ".bn", in);
  }
  p.add_kernel("cost.out.w", {3, 3, 3, f, 1}, rng);
  p.add_zeros("cost.out.b", {1});
}

template <typename Scalar>
FeaturePair<Scalar> extract_features(const Tensor<Scalar>& left, const Tensor<Scalar>& right,
                                     ParameterSet<Scalar>& p, const BackboneConfig& c, Mode mode) {
  const Shape expect{c.height, c.width, c.image_channels};
  if (left.shape() != expect || right.shape() != expect) {
    throw ConfigError("images must be " + shape_string(expect) + ", got " + shape_string(left.shape()) + " and " +
                      shape_string(right.shape()));
  }
  Tensor<Scalar> x = stack(std::vector<Tensor<Scalar>>{left, right});
  x = feature_layer(x, p, "feat.conv0", 2, mode);
  for (Index b = 0; b < c.residual_blocks; ++b) {
    const std::string name = level_name("feat.res", b);
    Tensor<Scalar> y = feature_layer(x, p, name + ".conv0", 1, mode);
    y = feature_layer(y, p, name + ".conv1", 1, mode);
    x = add(x, y);
  }
  x = add(batched_conv2d(x, p.at("feat.out.w"), 1), p.at("feat.out.b"));
  const Shape half{c.height / 2, c.width / 2, c.features};
  return {reshape(slice(x, 0, 0, 1), half), reshape(slice(x, 0, 1, 1), half)};
}

template <typename Scalar>
Tensor<Scalar> build_feature_volume(const Tensor<Scalar>& base, const Tensor<Scalar>& shift, Index d_half,
                                    ShiftDirection direction) {
  if (base.rank() != 3 || base.shape() != shift.shape()) {
    throw ContractViolation("feature maps must share an [H,W,F] shape, got " + shape_string(base.shape()) + " and " +
                            shape_string(shift.shape()));
  }
  if (d_half < 1 || d_half > base.dim(1)) {
    throw ConfigError("disparity extent " + std::to_string(d_half) + " must lie in [1, feature width " +
                      std::to_string(base.dim(1)) + "]");
  }
  std::vector<Tensor<Scalar>> slices;
  slices.reserve(static_cast<std::size_t>(d_half));
  for (Index d = 0; d < d_half; ++d) {
    const Index offset = direction == ShiftDirection::minus ? d : -d;
    slices.push_back(concat(std::vector<Tensor<Scalar>>{base, roll(shift, 1, offset)}, 2));
  }
  return stack(slices);
}

template <typename Scalar>
Tensor<Scalar> compute_cost_volume(const Tensor<Scalar>& volume, ParameterSet<Scalar>& p, const BackboneConfig& c,
                                   Mode mode) {
  const Shape expect{c.half_disparity(), c.height / 2, c.width / 2, 2 * c.features};
  if (volume.shape() != expect) {
    throw ContractViolation("feature volume must be " + shape_string(expect) + ", got " +
                            shape_string(volume.shape()));
  }
  Tensor<Scalar> x = volume_layer(volume, p, "cost.pre0", 1, mode);
  x = volume_layer(x, p, "cost.pre1", 1, mode);
  std::vector<Tensor<Scalar>> skips{x};
  for (Index l = 1; l <= c.encoder_levels; ++l) {
    const std::string unit = level_name("cost.enc", l);
    x = volume_layer(x, p, unit + ".conv0", 2, mode);
    x = volume_layer(x, p, unit + ".conv1", 1, mode);
    x = volume_layer(x, p, unit + ".conv2", 1, mode);
    if (l < c.encoder_levels) skips.push_back(x);
  }
  for (Index l = c.encoder_levels; l >= 1; --l) {
    const std::string dec = level_name("cost.dec", l);
    const Tensor<Scalar>& skip = skips[static_cast<std::size_t>(l - 1)];
    x = norm_relu(conv3d_transpose(x, p.at(dec + ".w"), {2, 2, 2}, skip.shape()), p, dec, mode);
    x = add(x, skip);
  }
  const Shape full{c.max_disparity, c.height, c.width, 1};
  x = add(conv3d_transpose(x, p.at("cost.out.w"), {2, 2, 2}, full), p.at("cost.out.b"));
  return reshape(x, {c.max_disparity, c.height, c.width});
}

#define STEREOAGG_INSTANTIATE_BACKBONE(S)                                                                      \
  template void init_backbone(const BackboneConfig&, ParameterSet<S>&, Rng&);                                   \
  template FeaturePair<S> extract_features(const Tensor<S>&, const Tensor<S>&, ParameterSet<S>&,                \
                                           const BackboneConfig&, Mode);                                        \
  template Tensor<S> build_feature_volume(const Tensor<S>&, const Tensor<S>&, Index, ShiftDirection);           \
  template Tensor<S> compute_cost_volume(const Tensor<S>&, ParameterSet<S>&, const BackboneConfig&, Mode);

STEREOAGG_INSTANTIATE_BACKBONE(float)
STEREOAGG_INSTANTIATE_BACKBONE(double)

}  // namespace stereoagg
