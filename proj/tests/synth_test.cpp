#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "stereoagg/dataset.hpp"
#include "stereoagg/image_io.hpp"
#include "stereoagg/synth.hpp"
#include "support.hpp"

namespace stereoagg {
namespace {

SceneSpec single_layer(double disparity) {
  SceneSpec s;
  s.layers = 1;
  s.disparities = {disparity};
  return s;
}

TEST(Synth, ZeroDisparityPlaneIsAnIdentityPair) {
  const StereoSample s = generate(single_layer(0));
  EXPECT_TRUE(s.left == s.right);
  EXPECT_TRUE((s.disparity == 0.0f).all());
  EXPECT_TRUE((s.mask == 1).all());
}

TEST(Synth, ConstantShiftPlane) {
  const StereoSample s = generate(single_layer(3));
  for (Index h = 4; h < 28; ++h)
    for (Index w = 4; w < 28; ++w) EXPECT_EQ(s.right.at(h, w - 3), s.left.at(h, w)) << h << "," << w;
  EXPECT_TRUE((s.disparity == 3.0f).all());
  // The first three columns have no correspondence in the right view.
  for (Index h = 0; h < 32; ++h) {
    EXPECT_EQ(s.mask(h, 2), 0);
    EXPECT_EQ(s.mask(h, 3), 1);
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  SceneSpec spec;
  spec.seed = 99;
  const StereoSample a = generate(spec), b = generate(spec);
  EXPECT_TRUE(a.left == b.left);
  EXPECT_TRUE(a.right == b.right);
  EXPECT_TRUE((a.disparity == b.disparity).all());
  EXPECT_TRUE((a.mask == b.mask).all());
  spec.seed = 100;
  EXPECT_FALSE(generate(spec).left == a.left);
}

TEST(Synth, PhotometricConsistencyAndMaskSoundness) {
  SceneSpec spec;
  spec.layers = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const StereoSample s = generate(spec);
    Index valid = 0;
    for (Index h = 0; h < spec.height; ++h)
      for (Index w = 0; w < spec.width; ++w) {
        if (!s.mask(h, w)) continue;
        ++valid;
        const float d = s.disparity(h, w);
        ASSERT_EQ(d, std::round(d));
        const Index x = w - static_cast<Index>(d);
        ASSERT_GE(x, 0) << "valid pixel maps out of frame";
        ASSERT_EQ(s.left.at(h, w), s.right.at(h, x)) << "seed " << seed << " at " << h << "," << w;
      }
    EXPECT_GT(valid, spec.height * spec.width / 2);
  }
}

TEST(Synth, NearerLayersHaveLargerDisparity) {
  SceneSpec spec;
  spec.layers = 3;
  spec.disparities = {1, 4, 6};
  const StereoSample s = generate(spec);
  EXPECT_EQ(s.disparity.minCoeff(), 1.0f);
  EXPECT_EQ(s.disparity.maxCoeff(), 6.0f);
}

TEST(Synth, RampModeStaysInRange) {
  SceneSpec spec;
  spec.disparity_mode = DisparityMode::ramp;
  spec.texture = Texture::noise;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const StereoSample s = generate(spec);
    EXPECT_GE(s.disparity.minCoeff(), 0.0f);
    EXPECT_LE(s.disparity.maxCoeff(), static_cast<float>(spec.max_disparity - 1));
    EXPECT_GE(s.left.pixels.minCoeff(), 0.0f);
    EXPECT_LE(s.left.pixels.maxCoeff(), 1.0f);
  }
}

TEST(Synth, UnmaskedModeKeepsOnlyTheFrameTest) {
  SceneSpec spec;
  spec.disparities = {1, 3, 6};
  const StereoSample masked = generate(spec);
  spec.mask_occlusions = false;
  const StereoSample s = generate(spec);
  EXPECT_GT(s.mask.cast<int>().sum(), masked.mask.cast<int>().sum());
  for (Index h = 0; h < spec.height; ++h)
    for (Index w = 0; w < spec.width; ++w) EXPECT_EQ(s.mask(h, w), w - s.disparity(h, w) >= 0 ? 1 : 0);
}

TEST(Synth, ImpossibleSpecsAreConfigErrors) {
  SceneSpec s = single_layer(8);  // max_disparity 8 allows 0..7
  EXPECT_THROW(generate(s), ConfigError);
  s = single_layer(2.5);
  EXPECT_THROW(generate(s), ConfigError);
  s = SceneSpec{};
  s.disparities = {1, 2};  // three layers
  EXPECT_THROW(generate(s), ConfigError);
  s = SceneSpec{};
  s.dot_density = 0;
  EXPECT_THROW(generate(s), ConfigError);
}

// Independent little-endian float reader for the fixture below.
float le_float(const unsigned char* p) {
  const std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                             std::uint32_t(p[3]) << 24;
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

TEST(Pfm, HandBuiltLittleEndianFixture) {
  const float values[6] = {0.5f, -1.25f, 3.0f, 7.75f, 1e-3f, 42.0f};
  std::string bytes = "Pf\n3 2\n-1.0\n";
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
  }
  ASSERT_EQ(bytes.size(), 12u + 24u);
  const DisparityMap map = decode_pfm(bytes);
  ASSERT_EQ(map.rows(), 2);
  ASSERT_EQ(map.cols(), 3);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + 12);
  // Rows are stored bottom to top.
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 3; ++c) EXPECT_EQ(map(1 - r, c), le_float(data + 4 * (r * 3 + c)));
}

TEST(Pfm, BigEndianIsAccepted) {
  std::string bytes = "Pf\n1 1\n1.0\n";
  const float v = 2.5f;
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int k = 3; k >= 0; --k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
  EXPECT_EQ(decode_pfm(bytes)(0, 0), 2.5f);
}

TEST(Pfm, RoundTripIsBitExact) {
  Rng rng(1);
  DisparityMap map(7, 5);
  for (Index i = 0; i < map.size(); ++i) map.data()[i] = static_cast<float>(rng.normal() * 100);
  const DisparityMap back = decode_pfm(encode_pfm(map));
  ASSERT_EQ(back.rows(), 7);
  EXPECT_EQ(std::memcmp(back.data(), map.data(), sizeof(float) * 35), 0);
}

TEST(Pfm, MalformedInputs) {
  try {
    decode_pfm("PF\n1 1\n-1.0\n0000");
    FAIL() << "color PFM accepted";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos);
  }
  EXPECT_THROW(decode_pfm("P5\n1 1\n-1.0\n0000"), ParseError);
  EXPECT_THROW(decode_pfm("Pf\n3 2\n-1.0\n0000"), ParseError);
  EXPECT_THROW(decode_pfm("Pf\nx 2\n-1.0\n"), ParseError);
  EXPECT_THROW(decode_pfm("Pf\n1 1\n0\n0000"), ParseError);
  try {
    decode_pfm("Pf\n3 2\n-1.0\n0000");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 16u);
  }
  DisparityMap bad = DisparityMap::Zero(1, 1);
  bad(0, 0) = NAN;
  EXPECT_THROW(encode_pfm(bad), NumericFault);
}

TEST(Pgm, RoundTripAndQuantization) {
  const StereoSample s = generate(SceneSpec{});
  const Plane<std::uint8_t> q = quantize(s.left);
  EXPECT_TRUE((decode_pgm(encode_pgm(q)) == q).all());
  EXPECT_TRUE(dequantize(q) == s.left);
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0"), ParseError);
  EXPECT_THROW(decode_pgm("P5\n1 1\n65535\n00"), ParseError);
}

TEST(Png, WritesAFile) {
  const std::string dir = testing::scratch_dir("png");
  DisparityMap map(4, 4);
  map.setConstant(3.0f);
  write_png(dir + "/d.png", 4, 4, 3, colorize_disparity(map, 7.0));
  const std::string bytes = read_file(dir + "/d.png");
  ASSERT_GT(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
}

TEST(Colormap, FixedRampEndpoints) {
  DisparityMap map(1, 3);
  map << -1.0f, 0.0f, 8.0f;
  const auto rgb = colorize_disparity(map, 8.0);
  EXPECT_EQ(std::vector<std::uint8_t>(rgb.begin(), rgb.begin() + 3), std::vector<std::uint8_t>(rgb.begin() + 3, rgb.begin() + 6));
  EXPECT_GT(rgb[2], rgb[0]);  // low end is blue
  EXPECT_GT(rgb[6], rgb[8]);  // high end is red
}

TEST(Dataset, WriteReadRoundTrip) {
  const std::string dir = testing::scratch_dir("dataset");
  SceneSpec spec;
  spec.seed = 7;
  const DatasetManifest m = write_dataset(dir, spec, 4, true);
  EXPECT_EQ(m.indices.size(), 4u);
  const auto samples = read_dataset(dir);
  const auto direct = generate_dataset(spec, 4);
  ASSERT_EQ(samples.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(samples[i].left == direct[i].left);
    EXPECT_TRUE(samples[i].right == direct[i].right);
    EXPECT_TRUE((samples[i].disparity == direct[i].disparity).all());
    EXPECT_TRUE((samples[i].mask == direct[i].mask).all());
  }
  const DatasetManifest r = read_manifest(dir);
  EXPECT_EQ(r.seeds, m.seeds);
  EXPECT_EQ(r.spec.seed, 7u);
  EXPECT_TRUE(std::filesystem::exists(dir + "/0003_disp.pfm"));
}

TEST(Dataset, RefusesNonEmptyDirectory) {
  const std::string dir = testing::scratch_dir("refuse");
  write_file(dir + "/something", "x");
  EXPECT_THROW(write_dataset(dir, SceneSpec{}, 1, false), IoError);
  EXPECT_NO_THROW(write_dataset(dir, SceneSpec{}, 1, true));
}

TEST(Dataset, ByteReproducible) {
  const std::string a = testing::scratch_dir("repro_a"), b = testing::scratch_dir("repro_b");
  write_dataset(a, SceneSpec{}, 3, true);
  write_dataset(b, SceneSpec{}, 3, true);
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    EXPECT_EQ(read_file(entry.path().string()), read_file(b + "/" + name)) << name;
  }
}

}  // namespace
}  // namespace stereoagg
