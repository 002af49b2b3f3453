#include "stereoagg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stereoagg/random.hpp"

namespace stereoagg {

namespace {

struct Layer {
  Index top = 0;
  Index left = 0;
  Index bottom = 0;  // exclusive
  Index right = 0;   // exclusive
  // d(h, w) = base + slope_w * (w - center_w) + slope_h * (h - center_h)
  double base = 0;
  double slope_w = 0;
  double slope_h = 0;
  double center_w = 0;
  double center_h = 0;
  Plane<float> texture;

  bool covers(Index h, Index w) const { return h >= top && h < bottom && w >= left && w < right; }

  double disparity(Index h, double w) const {
    return base + slope_w * (w - center_w) + slope_h * (static_cast<double>(h) - center_h);
  }

  // Reference column whose warped position lands on target column x.
  double source_column(Index h, double x) const {
    return (x + base - slope_w * center_w + slope_h * (static_cast<double>(h) - center_h)) / (1.0 - slope_w);
  }

  float sample(Index h, double w) const {
    const auto w0 = static_cast<Index>(std::floor(w));
    const double f = w - static_cast<double>(w0);
    if (f == 0.0) return texture(h, w0);
    const Index w1 = std::min<Index>(w0 + 1, texture.cols() - 1);
    return static_cast<float>((1.0 - f) * texture(h, w0) + f * texture(h, w1));
  }
};

float texel(const SceneSpec& spec, Rng& rng) {
  if (spec.texture == Texture::dots) return rng.uniform() < spec.dot_density ? 1.0f : 0.0f;
  return static_cast<float>(rng.uniform());
}

Plane<float> make_texture(const SceneSpec& spec, Rng& rng) {
  Plane<float> raw(spec.height, spec.width);
  for (Index h = 0; h < spec.height; ++h)
    for (Index w = 0; w < spec.width; ++w) raw(h, w) = texel(spec, rng);
  if (spec.texture == Texture::dots) return raw;
  Plane<float> smooth(spec.height, spec.width);
  for (Index h = 0; h < spec.height; ++h)
    for (Index w = 0; w < spec.width; ++w) {
      double total = 0;
      int n = 0;
      for (Index dh = -1; dh <= 1; ++dh)
        for (Index dw = -1; dw <= 1; ++dw) {
          const Index y = h + dh;
          const Index x = w + dw;
          if (y < 0 || y >= spec.height || x < 0 || x >= spec.width) continue;
          total += raw(y, x);
          ++n;
        }
      smooth(h, w) = static_cast<float>(total / n);
    }
  return smooth;
}

std::vector<Layer> make_layers(const SceneSpec& spec, Rng& rng) {
  const auto count = static_cast<std::size_t>(spec.layers);
  std::vector<Layer> layers(count);
  for (std::size_t i = 0; i < count; ++i) {
    Layer& l = layers[i];
    if (i == 0) {
      l.bottom = spec.height;
      l.right = spec.width;
    } else {
      const Index rh = std::max<Index>(1, spec.height / 4 + rng.below(std::max<Index>(1, spec.height / 4 + 1)));
      const Index rw = std::max<Index>(1, spec.width / 4 + rng.below(std::max<Index>(1, spec.width / 4 + 1)));
      l.top = rng.below(spec.height - rh + 1);
      l.left = rng.below(spec.width - rw + 1);
      l.bottom = l.top + rh;
      l.right = l.left + rw;
    }
    l.center_h = 0.5 * static_cast<double>(l.top + l.bottom - 1);
    l.center_w = 0.5 * static_cast<double>(l.left + l.right - 1);
  }

  const double top_disparity = static_cast<double>(spec.max_disparity - 1);
  std::vector<double> bases;
  if (!spec.disparities.empty()) {
    bases = spec.disparities;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      bases.push_back(spec.disparity_mode == DisparityMode::integer
                          ? static_cast<double>(rng.below(spec.max_disparity))
                          : rng.uniform(0.0, top_disparity));
    }
    std::sort(bases.begin(), bases.end());
  }
  for (std::size_t i = 0; i < count; ++i) {
    Layer& l = layers[i];
    l.base = bases[i];
    if (spec.disparity_mode == DisparityMode::ramp && spec.disparities.empty()) {
      // Keep the plane inside [0, max_disparity - 1] over the rectangle.
      const double room = std::min(l.base, top_disparity - l.base);
      const double reach = 0.5 * static_cast<double>(l.right - l.left - 1) +
                           0.5 * static_cast<double>(l.bottom - l.top - 1);
      const double limit = reach > 0 ? std::min(0.5, room / reach) : 0.0;
      l.slope_w = rng.uniform(-limit, limit);
      l.slope_h = rng.uniform(-limit, limit);
    }
    l.texture = make_texture(spec, rng);
  }
  return layers;
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 1) throw ConfigError("scene.height: must be >= 1");
  if (width < 1) throw ConfigError("scene.width: must be >= 1");
  if (max_disparity < 1) throw ConfigError("scene.max_disparity: must be >= 1");
  if (layers < 1) throw ConfigError("scene.layers: must be >= 1");
  if (!(dot_density > 0.0 && dot_density <= 1.0)) throw ConfigError("scene.dot_density: must lie in (0, 1]");
  if (!disparities.empty()) {
    if (static_cast<Index>(disparities.size()) != layers) {
      throw ConfigError("scene.disparities: expected " + std::to_string(layers) + " values, got " +
                        std::to_string(disparities.size()));
    }
    for (double d : disparities) {
      if (!(d >= 0.0 && d <= static_cast<double>(max_disparity - 1))) {
        throw ConfigError("scene.disparities: value " + std::to_string(d) + " outside [0, max_disparity - 1]");
      }
      if (disparity_mode == DisparityMode::integer && d != std::floor(d)) {
        throw ConfigError("scene.disparities: value " + std::to_string(d) + " is not an integer");
      }
    }
  }
}

StereoSample generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::vector<Layer> layers = make_layers(spec, rng);
  const Index height = spec.height;
  const Index width = spec.width;

  StereoSample s;
  s.left = Image(height, width, 1);
  s.right = Image(height, width, 1);
  s.disparity = DisparityMap::Zero(height, width);
  s.mask = ValidityMask::Zero(height, width);

  Plane<int> left_layer(height, width);
  for (Index h = 0; h < height; ++h)
    for (Index w = 0; w < width; ++w) {
      int top = 0;
      for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i].covers(h, w)) top = static_cast<int>(i);
      left_layer(h, w) = top;
      s.left.at(h, w) = layers[static_cast<std::size_t>(top)].texture(h, w);
      s.disparity(h, w) = static_cast<float>(layers[static_cast<std::size_t>(top)].disparity(h, static_cast<double>(w)));
    }

  // Right view: the nearest layer whose warped footprint reaches the pixel.
  Plane<int> right_layer = Plane<int>::Constant(height, width, -1);
  for (Index h = 0; h < height; ++h) {
    for (Index x = 0; x < width; ++x) {
      for (std::size_t i = layers.size(); i-- > 0;) {
        const Layer& l = layers[i];
        if (h < l.top || h >= l.bottom) continue;
        const double w = l.source_column(h, static_cast<double>(x));
        if (w < static_cast<double>(l.left) || w > static_cast<double>(l.right - 1) || w > static_cast<double>(width - 1)) {
          continue;
        }
        right_layer(h, x) = static_cast<int>(i);
        s.right.at(h, x) = l.sample(h, w);
        break;
      }
    }
    for (Index x = 0; x < width; ++x) {
      if (right_layer(h, x) >= 0) continue;
      if (spec.fill == OcclusionFill::noise) {
        s.right.at(h, x) = texel(spec, rng);
        continue;
      }
      float value = 0.0f;
      for (Index k = 1; k < width; ++k) {
        if (x - k >= 0 && right_layer(h, x - k) >= 0) {
          value = s.right.at(h, x - k);
          break;
        }
        if (x + k < width && right_layer(h, x + k) >= 0) {
          value = s.right.at(h, x + k);
          break;
        }
      }
      s.right.at(h, x) = value;
    }
  }

  for (Index h = 0; h < height; ++h)
    for (Index w = 0; w < width; ++w) {
      const double x = static_cast<double>(w) - s.disparity(h, w);
      if (x < 0.0 || x > static_cast<double>(width - 1)) continue;
      if (!spec.mask_occlusions) {
        s.mask(h, w) = 1;
        continue;
      }
      const auto x0 = static_cast<Index>(std::floor(x));
      const auto x1 = static_cast<Index>(std::ceil(x));
      s.mask(h, w) = right_layer(h, x0) == left_layer(h, w) && right_layer(h, x1) == left_layer(h, w);
    }

  for (Index i = 0; i < s.left.pixels.size(); ++i) {
    s.left.pixels[i] = std::round(s.left.pixels[i] * 255.0f) / 255.0f;
    s.right.pixels[i] = std::round(s.right.pixels[i] * 255.0f) / 255.0f;
  }
  return s;
}

std::uint64_t sample_seed(const SceneSpec& spec, Index index) {
  return derive_seed(spec.seed, static_cast<std::uint64_t>(index));
}

std::vector<StereoSample> generate_dataset(const SceneSpec& spec, Index count, Index first_index) {
  std::vector<StereoSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    SceneSpec one = spec;
    one.seed = sample_seed(spec, first_index + i);
    out.push_back(generate(one));
  }
  return out;
}

}  // namespace stereoagg
