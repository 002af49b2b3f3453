#include "stereoagg/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "stereoagg/config.hpp"
#include "stereoagg/image_io.hpp"

namespace stereoagg {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

constexpr const char* kManifestMagic = "stereoagg-dataset 1";

}  // namespace

std::string sample_stem(Index index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(index));
  return buf;
}

DatasetManifest write_dataset(const std::string& directory, const SceneSpec& spec, Index count, bool force,
                              Index first_index) {
  spec.validate();
  if (count < 1) throw ConfigError("count: must be >= 1");
  std::error_code ec;
  if (fs::exists(directory, ec) && !fs::is_empty(directory, ec) && !force) {
    throw IoError(directory + " exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory + ": " + ec.message());

  DatasetManifest m;
  m.spec = spec;
  std::ostringstream manifest;
  manifest << kManifestMagic << '\n' << "count " << count << '\n' << "spec " << scene_to_json(spec) << '\n';
  for (Index i = 0; i < count; ++i) {
    const Index index = first_index + i;
    SceneSpec s = spec;
    s.seed = sample_seed(spec, index);
    const StereoSample sample = generate(s);
    const std::string stem = sample_stem(index);
    write_pgm(join(directory, stem + "_left.pgm"), quantize(sample.left));
    write_pgm(join(directory, stem + "_right.pgm"), quantize(sample.right));
    write_pfm(join(directory, stem + "_disp.pfm"), sample.disparity);
    write_pgm(join(directory, stem + "_mask.pgm"), (sample.mask.cast<int>() * 255).cast<std::uint8_t>());
    manifest << "sample " << stem << " seed " << s.seed << '\n';
    m.indices.push_back(index);
    m.seeds.push_back(s.seed);
  }
  write_file(join(directory, "manifest"), manifest.str());
  return m;
}

DatasetManifest read_manifest(const std::string& directory) {
  const std::string text = read_file(join(directory, "manifest"));
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  auto next = [&] {
    if (!std::getline(in, line)) throw ParseError("manifest ends early", text.size());
    const std::size_t start = offset;
    offset += line.size() + 1;
    return start;
  };
  std::size_t at = next();
  if (line != kManifestMagic) throw ParseError("not a dataset manifest", at);
  at = next();
  long long count = 0;
  if (std::sscanf(line.c_str(), "count %lld", &count) != 1 || count < 1) throw ParseError("bad count line", at);
  at = next();
  if (line.rfind("spec ", 0) != 0) throw ParseError("missing spec line", at);
  DatasetManifest m;
  m.spec = parse_scene(line.substr(5));
  for (long long i = 0; i < count; ++i) {
    at = next();
    long long index = 0;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "sample %lld seed %llu", &index, &seed) != 2) {
      throw ParseError("bad sample line", at);
    }
    m.indices.push_back(static_cast<Index>(index));
    m.seeds.push_back(seed);
  }
  return m;
}

Image read_image(const std::string& path) { return dequantize(read_pgm(path)); }

std::vector<StereoSample> read_dataset(const std::string& directory) {
  const DatasetManifest m = read_manifest(directory);
  std::vector<StereoSample> out;
  for (Index index : m.indices) {
    const std::string stem = join(directory, sample_stem(index));
    StereoSample s;
    s.left = read_image(stem + "_left.pgm");
    s.right = read_image(stem + "_right.pgm");
    s.disparity = read_pfm(stem + "_disp.pfm");
    const Plane<std::uint8_t> mask = read_pgm(stem + "_mask.pgm");
    s.mask = (mask > 0).cast<std::uint8_t>();
    if (s.right.height != s.left.height || s.right.width != s.left.width || s.disparity.rows() != s.left.height ||
        s.disparity.cols() != s.left.width || s.mask.rows() != s.left.height || s.mask.cols() != s.left.width) {
      throw IoError("sample " + sample_stem(index) + " has inconsistent extents");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace stereoagg
