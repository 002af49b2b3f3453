#include "stereoagg/config.hpp"

#include <json.hpp>

#include <map>
#include <set>

#include "stereoagg/image_io.hpp"

namespace stereoagg {

namespace {

using nlohmann::json;

template <typename Enum>
using Names = std::map<std::string, Enum>;

const Names<ShiftDirection> kShift{{"minus", ShiftDirection::minus}, {"plus", ShiftDirection::plus}};
const Names<DisparityMode> kDisparityMode{{"integer", DisparityMode::integer}, {"ramp", DisparityMode::ramp}};
const Names<Texture> kTexture{{"dots", Texture::dots}, {"noise", Texture::noise}};
const Names<OcclusionFill> kFill{{"noise", OcclusionFill::noise}, {"nearest", OcclusionFill::nearest}};

template <typename Enum>
std::string name_of(const Names<Enum>& names, Enum value) {
  for (const auto& [k, v] : names)
    if (v == value) return k;
  return "?";
}

// Reads keys from one JSON object and remembers which ones were used.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const char* key, Index& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
      out = v->get<Index>();
    }
  }
  void read(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  template <typename Enum>
  void read(const char* key, Enum& out, const Names<Enum>& names) {
    std::string text;
    read(key, text);
    if (!find(key)) return;
    auto it = names.find(text);
    if (it == names.end()) {
      std::string allowed;
      for (const auto& [k, v] : names) allowed += (allowed.empty() ? "" : ", ") + k;
      throw ConfigError(where(key) + ": '" + text + "' is not one of " + allowed);
    }
    out = it->second;
  }

  Section child(const char* key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, where(key));
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where(item.key().c_str()) + ": unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_scene(Section& s, SceneSpec& scene) {
  s.read("height", scene.height);
  s.read("width", scene.width);
  s.read("max_disparity", scene.max_disparity);
  s.read("layers", scene.layers);
  s.read("disparities", scene.disparities);
  s.read("disparity_mode", scene.disparity_mode, kDisparityMode);
  s.read("dot_density", scene.dot_density);
  s.read("texture", scene.texture, kTexture);
  s.read("fill", scene.fill, kFill);
  s.read("mask_occlusions", scene.mask_occlusions);
  s.read("seed", scene.seed);
  s.finish();
}

json scene_json(const SceneSpec& s) {
  return json{{"height", s.height},
              {"width", s.width},
              {"max_disparity", s.max_disparity},
              {"layers", s.layers},
              {"disparities", s.disparities},
              {"disparity_mode", name_of(kDisparityMode, s.disparity_mode)},
              {"dot_density", s.dot_density},
              {"texture", name_of(kTexture, s.texture)},
              {"fill", name_of(kFill, s.fill)},
              {"mask_occlusions", s.mask_occlusions},
              {"seed", s.seed}};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  scene.validate();
  baseline.validate();
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunConfig parse_run_config(const std::string& text) {
  const json root = parse_text(text);
  RunConfig c;
  Section top(root, "");
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);
  {
    Section b = top.child("backbone");
    auto& m = c.model.backbone;
    b.read("features", m.features);
    b.read("max_disparity", m.max_disparity);
    b.read("residual_blocks", m.residual_blocks);
    b.read("encoder_levels", m.encoder_levels);
    b.read("height", m.height);
    b.read("width", m.width);
    b.read("image_channels", m.image_channels);
    b.read("shift", m.shift, kShift);
    b.finish();
  }
  {
    Section a = top.child("aggregation");
    auto& m = c.model.aggregation;
    a.read("proposals", m.proposals);
    a.read("guidance_width", m.guidance_width);
    a.read("disable_guidance", m.disable_guidance);
    a.read("disable_proposal", m.disable_proposal);
    a.read("disable_aggregation", m.disable_aggregation);
    a.finish();
  }
  {
    Section t = top.child("train");
    t.read("learning_rate", c.train.optimizer.learning_rate);
    t.read("rmsprop_decay", c.train.optimizer.decay);
    t.read("rmsprop_epsilon", c.train.optimizer.epsilon);
    t.read("iterations", c.train.iterations);
    t.read("shuffle_seed", c.train.shuffle_seed);
    t.read("eval_interval", c.train.eval_interval);
    t.read("checkpoint", c.train.checkpoint_path);
    t.finish();
  }
  {
    Section s = top.child("scene");
    read_scene(s, c.scene);
  }
  {
    Section b = top.child("baseline");
    b.read("census_window", c.baseline.census_window);
    b.read("aggregation_window", c.baseline.aggregation_window);
    b.read("max_disparity", c.baseline.max_disparity);
    b.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::string to_json(const RunConfig& c) {
  const auto& b = c.model.backbone;
  const auto& a = c.model.aggregation;
  const auto& t = c.train;
  json root{{"seed", c.seed},
            {"output_dir", c.output_dir},
            {"backbone",
             {{"features", b.features},
              {"max_disparity", b.max_disparity},
              {"residual_blocks", b.residual_blocks},
              {"encoder_levels", b.encoder_levels},
              {"height", b.height},
              {"width", b.width},
              {"image_channels", b.image_channels},
              {"shift", name_of(kShift, b.shift)}}},
            {"aggregation",
             {{"proposals", a.proposals},
              {"guidance_width", a.guidance_width},
              {"disable_guidance", a.disable_guidance},
              {"disable_proposal", a.disable_proposal},
              {"disable_aggregation", a.disable_aggregation}}},
            {"train",
             {{"learning_rate", t.optimizer.learning_rate},
              {"rmsprop_decay", t.optimizer.decay},
              {"rmsprop_epsilon", t.optimizer.epsilon},
              {"iterations", t.iterations},
              {"shuffle_seed", t.shuffle_seed},
              {"eval_interval", t.eval_interval},
              {"checkpoint", t.checkpoint_path}}},
            {"scene", scene_json(c.scene)},
            {"baseline",
             {{"census_window", c.baseline.census_window},
              {"aggregation_window", c.baseline.aggregation_window},
              {"max_disparity", c.baseline.max_disparity}}}};
  return root.dump(2) + "\n";
}

std::string scene_to_json(const SceneSpec& scene) { return scene_json(scene).dump(); }

SceneSpec parse_scene(const std::string& text) {
  const json root = parse_text(text);
  SceneSpec scene;
  Section s(root, "scene");
  read_scene(s, scene);
  scene.validate();
  return scene;
}

}  // namespace stereoagg
