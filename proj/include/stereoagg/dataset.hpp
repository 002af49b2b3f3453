#pragma once

#include <string>
#include <vector>

#include "stereoagg/synth.hpp"

namespace stereoagg {

// On-disk layout of a generated dataset:
//
//   NNNN_left.pgm   NNNN_right.pgm   8-bit views
//   NNNN_disp.pfm                    ground-truth disparity
//   NNNN_mask.pgm                    255 where valid, 0 elsewhere
//   manifest                         spec echo and per-sample seeds
//
// manifest:
//   stereoagg-dataset 1
//   count <n>
//   spec <one-line JSON scene spec>
//   sample <NNNN> seed <decimal seed>
//   ...
struct DatasetManifest {
  SceneSpec spec;
  std::vector<Index> indices;
  std::vector<std::uint64_t> seeds;
};

std::string sample_stem(Index index);

// Generates `count` samples and writes them. Refuses a non-empty directory
// unless `force` is set, in which case files of the same names are replaced.
DatasetManifest write_dataset(const std::string& directory, const SceneSpec& spec, Index count, bool force,
                              Index first_index = 0);

DatasetManifest read_manifest(const std::string& directory);
std::vector<StereoSample> read_dataset(const std::string& directory);

// Reads a grayscale view stored as PGM.
Image read_image(const std::string& path);

}  // namespace stereoagg
