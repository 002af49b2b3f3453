#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "stereoagg/parameters.hpp"

namespace stereoagg {

// Everything needed to resume training or run inference. Values are 32-bit.
//
// File layout: a text index followed by a little-endian float32 block.
//
//   STEREOAGG-CHECKPOINT 1
//   iteration <n>
//   config <byte count>
//   <config text><newline>
//   param <name> <rank> <extents...> <offset>
//   rms <name> <rank> <extents...> <offset>
//   norm <name> <initialized 0|1> <channels> <mean offset> <var offset>
//   data <float count>
//   <binary block>
//
// Offsets count floats from the start of the block. Entries are sorted by
// name within each kind, so encoding is a pure function of the contents.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::uint64_t iteration = 0;
  std::string config;  // resolved run configuration echo
  ParameterSet<float> params;
  std::map<std::string, ArrayX<float>> rms;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stereoagg
