#include <gtest/gtest.h>

#include "stereoagg/backbone.hpp"
#include "stereoagg/gradcheck.hpp"
#include "support.hpp"

namespace stereoagg {
namespace {

using testing::max_abs_diff;
using T = Tensor<double>;

BackboneConfig desk() {
  BackboneConfig c;
  c.features = 8;
  c.max_disparity = 16;
  c.height = 32;
  c.width = 32;
  return c;
}

T random_image(const BackboneConfig& c, Rng& rng) {
  ArrayX<double> v(c.height * c.width * c.image_channels);
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  return T({c.height, c.width, c.image_channels}, v);
}

struct Fixture {
  BackboneConfig config;
  ParameterSet<double> params;
  explicit Fixture(BackboneConfig c, std::uint64_t seed = 1) : config(c) {
    Rng rng(seed);
    init_backbone(config, params, rng);
  }
};

TEST(Backbone, DeskShapes) {
  Fixture f(desk());
  Rng rng(2);
  const T left = random_image(f.config, rng), right = random_image(f.config, rng);
  const auto feats = extract_features(left, right, f.params, f.config, Mode::train);
  EXPECT_EQ(feats.base.shape(), (Shape{16, 16, 8}));
  EXPECT_EQ(feats.shift.shape(), (Shape{16, 16, 8}));
  const T volume = build_feature_volume(feats.base, feats.shift, f.config.half_disparity());
  EXPECT_EQ(volume.shape(), (Shape{8, 16, 16, 16}));
  const T cost = compute_cost_volume(volume, f.params, f.config, Mode::train);
  EXPECT_EQ(cost.shape(), (Shape{16, 32, 32}));
  EXPECT_TRUE(cost.values().allFinite());
  Tape<double>::active().clear();
}

TEST(Backbone, IdenticalImagesGiveIdenticalFeatures) {
  Fixture f(desk());
  Rng rng(3);
  const T img = random_image(f.config, rng);
  const auto feats = extract_features(img, img, f.params, f.config, Mode::train);
  EXPECT_TRUE((feats.base.values() == feats.shift.values()).all());
  Tape<double>::active().clear();
}

TEST(Backbone, ZeroOutputKernelLeavesOnlyTheBias) {
  Fixture f(desk());
  f.params.at("feat.out.w").mutable_values().setZero();
  f.params.at("feat.out.b").mutable_values().setLinSpaced(8, -1.0, 1.0);
  Rng rng(4);
  const auto feats = extract_features(random_image(f.config, rng), random_image(f.config, rng), f.params, f.config,
                                      Mode::train);
  for (Index i = 0; i < feats.base.numel(); ++i) EXPECT_DOUBLE_EQ(feats.base[i], f.params.at("feat.out.b")[i % 8]);
  Tape<double>::active().clear();
}

TEST(FeatureVolume, ZeroShiftIsConcatenation) {
  Rng rng(5);
  const T b = testing::random_tensor({3, 4, 2}, rng), s = testing::random_tensor({3, 4, 2}, rng);
  const T v = build_feature_volume(b, s, 2);
  ASSERT_EQ(v.shape(), (Shape{2, 3, 4, 4}));
  for (Index p = 0; p < 12; ++p) {
    EXPECT_EQ(v[p * 4 + 0], b[p * 2 + 0]);
    EXPECT_EQ(v[p * 4 + 1], b[p * 2 + 1]);
    EXPECT_EQ(v[p * 4 + 2], s[p * 2 + 0]);
    EXPECT_EQ(v[p * 4 + 3], s[p * 2 + 1]);
  }
}

TEST(FeatureVolume, ShiftWrapsAroundTheWidth) {
  Rng rng(6);
  const Index h = 2, w = 4, f = 3;
  const T b = testing::random_tensor({h, w, f}, rng), s = testing::random_tensor({h, w, f}, rng);
  const T v = build_feature_volume(b, s, 2);
  // Slice d = 1 at column 0 reads S at column 3.
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < f; ++c) EXPECT_EQ(v[((1 * h + r) * w + 0) * 2 * f + f + c], s[(r * w + 3) * f + c]);

  const T plus = build_feature_volume(b, s, 2, ShiftDirection::plus);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < f; ++c) EXPECT_EQ(plus[((1 * h + r) * w + 3) * 2 * f + f + c], s[(r * w + 0) * f + c]);
}

TEST(FeatureVolume, TooManyShiftsIsAConfigError) {
  EXPECT_THROW(build_feature_volume(T::zeros({2, 4, 1}), T::zeros({2, 4, 1}), 5), ConfigError);
  EXPECT_THROW(build_feature_volume(T::zeros({2, 4, 1}), T::zeros({2, 3, 1}), 1), ContractViolation);
}

TEST(BackboneConfig, RejectsIndivisibleExtents) {
  BackboneConfig c = desk();
  c.height = 36;
  EXPECT_THROW(c.validate(), ConfigError);
  c = desk();
  c.max_disparity = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c = desk();
  c.max_disparity = 48;  // 24 shifts over a 16-wide feature map
  EXPECT_THROW(c.validate(), ConfigError);
  c = desk();
  c.image_channels = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(desk().validate());
}

TEST(Backbone, WrongImageSizeIsAConfigError) {
  Fixture f(desk());
  EXPECT_THROW(extract_features(T::zeros({16, 16, 1}), T::zeros({16, 16, 1}), f.params, f.config, Mode::train),
               ConfigError);
}

TEST(Backbone, ZeroedSkipSourcesStillGiveFiniteCost) {
  Fixture f(desk());
  for (auto& [name, t] : f.params.tensors())
    if (name.rfind("cost.enc", 0) == 0 || name.rfind("cost.pre", 0) == 0)
      if (name.size() > 2 && name.substr(name.size() - 2) == ".w") t.mutable_values().setZero();
  Rng rng(7);
  const T volume = testing::random_tensor({8, 16, 16, 16}, rng);
  const T cost = compute_cost_volume(volume, f.params, f.config, Mode::train);
  EXPECT_EQ(cost.shape(), (Shape{16, 32, 32}));
  EXPECT_TRUE(cost.values().allFinite());
  Tape<double>::active().clear();
}

TEST(Backbone, SwappingViewsChangesValuesNotShape) {
  Fixture f(desk());
  Rng rng(8);
  const T a = random_image(f.config, rng), b = random_image(f.config, rng);
  auto cost_of = [&](const T& l, const T& r) {
    const auto feats = extract_features(l, r, f.params, f.config, Mode::train);
    return compute_cost_volume(build_feature_volume(feats.base, feats.shift, 8), f.params, f.config, Mode::train);
  };
  const T ab = cost_of(a, b), ba = cost_of(b, a);
  EXPECT_EQ(ab.shape(), ba.shape());
  EXPECT_GT(max_abs_diff(ab, ba), 0.0);
  Tape<double>::active().clear();
}

TEST(Backbone, ShapeChainOverRandomConfigs) {
  Rng rng(9);
  for (int trial = 0; trial < 6; ++trial) {
    BackboneConfig c;
    c.encoder_levels = 1 + rng.below(2);
    const Index unit = Index{1} << (c.encoder_levels + 1);
    c.features = 1 + rng.below(4);
    c.residual_blocks = rng.below(3);
    c.height = unit * (1 + rng.below(3));
    c.width = unit * (2 + rng.below(2));
    c.max_disparity = unit * (1 + rng.below(c.width / unit));
    c.image_channels = rng.below(2) ? 3 : 1;
    ASSERT_NO_THROW(c.validate()) << trial;
    Fixture f(c, 10 + trial);
    const T l = random_image(c, rng), r = random_image(c, rng);
    const auto feats = extract_features(l, r, f.params, c, Mode::train);
    EXPECT_EQ(feats.base.shape(), (Shape{c.height / 2, c.width / 2, c.features}));
    const T v = build_feature_volume(feats.base, feats.shift, c.half_disparity(), c.shift);
    EXPECT_EQ(v.shape(), (Shape{c.max_disparity / 2, c.height / 2, c.width / 2, 2 * c.features}));
    const T cost = compute_cost_volume(v, f.params, c, Mode::train);
    EXPECT_EQ(cost.shape(), (Shape{c.max_disparity, c.height, c.width}));
    EXPECT_TRUE(cost.values().allFinite());
    Tape<double>::active().clear();
  }
}

TEST(GradientSuite, BackbonePasses) {
  for (const GradCheckResult& r : run_gradient_suite(1, "stereo-backbone", 20)) {
    EXPECT_TRUE(r.passed()) << r.to_line();
  }
}

}  // namespace
}  // namespace stereoagg
