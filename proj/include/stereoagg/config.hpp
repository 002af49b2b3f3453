#pragma once

#include <cstdint>
#include <string>

#include "stereoagg/baseline.hpp"
#include "stereoagg/model.hpp"
#include "stereoagg/synth.hpp"
#include "stereoagg/trainer.hpp"

namespace stereoagg {

// Everything a CLI run needs. Missing keys keep their defaults; unknown keys
// are rejected with the full dotted path in the message.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneSpec scene;
  BaselineConfig baseline;
  std::string output_dir = "out";
  std::uint64_t seed = 7;  // parameter initialization

  void validate() const;
};

// JSON text with // and /* */ comments allowed.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Fully resolved config, every key present. Parsing it yields an equal config.
std::string to_json(const RunConfig& config);

// One-line form used in dataset manifests.
std::string scene_to_json(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);

}  // namespace stereoagg
