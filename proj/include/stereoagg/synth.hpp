#pragma once

#include <cstdint>
#include <vector>

#include "stereoagg/image.hpp"

namespace stereoagg {

enum class Texture { dots, noise };
enum class OcclusionFill { noise, nearest };
enum class DisparityMode { integer, ramp };

// Layer 0 is a full-frame background plane; layers 1.. are rectangles drawn
// nearer in index order.
struct SceneSpec {
  Index height = 32;
  Index width = 32;
  Index max_disparity = 8;
  Index layers = 3;
  // Fixed fronto-parallel disparity per layer; random when empty.
  std::vector<double> disparities;
  DisparityMode disparity_mode = DisparityMode::integer;
  double dot_density = 0.5;
  Texture texture = Texture::dots;
  OcclusionFill fill = OcclusionFill::noise;
  // When false only out-of-frame correspondences are masked; occluded
  // pixels count as valid.
  bool mask_occlusions = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct StereoSample {
  Image left;
  Image right;
  DisparityMap disparity;  // ground truth in left (reference) coordinates
  ValidityMask mask;
};

// Deterministic for a given spec. Image values are quantized to k/255.
StereoSample generate(const SceneSpec& spec);

// Sample i uses seed derive_seed(spec.seed, first_index + i).
std::vector<StereoSample> generate_dataset(const SceneSpec& spec, Index count, Index first_index = 0);
std::uint64_t sample_seed(const SceneSpec& spec, Index index);

}  // namespace stereoagg
