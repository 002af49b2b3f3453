#include "stereoagg/image_io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace stereoagg {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

namespace {

// Whitespace-separated header tokens of netpbm-style formats.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token(const char* what) {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(std::string("missing ") + what, start);
    last_ = start;
    return bytes_.substr(start, pos_ - start);
  }

  long positive_integer(const char* what) {
    const std::string t = token(what);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) throw ParseError(std::string("invalid ") + what + " '" + t + "'", last_);
    return v;
  }

  // The single whitespace byte terminating the header.
  std::size_t data_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ParseError("header not terminated by whitespace", pos_);
    }
    return pos_ + 1;
  }

  std::size_t last_offset() const { return last_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::size_t last_ = 0;
};

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

std::string encode_pfm(const DisparityMap& map) {
  if (!map.allFinite()) throw NumericFault("write_pfm");
  std::string out = "Pf\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(map.size()) * 4);
  char* dst = out.data() + header;
  for (Index r = map.rows() - 1; r >= 0; --r) {
    for (Index c = 0; c < map.cols(); ++c) {
      auto bits = std::bit_cast<std::uint32_t>(map(r, c));
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      std::memcpy(dst, &bits, 4);
      dst += 4;
    }
  }
  return out;
}

DisparityMap decode_pfm(const std::string& bytes) {
  HeaderReader reader(bytes);
  const std::string magic = reader.token("PFM magic");
  if (magic == "PF") throw ParseError("unsupported PFM format 'PF' (three-channel)", reader.last_offset());
  if (magic != "Pf") throw ParseError("not a PFM file (magic '" + magic + "')", reader.last_offset());
  const long width = reader.positive_integer("width");
  const long height = reader.positive_integer("height");
  const std::string scale_token = reader.token("scale");
  char* end = nullptr;
  const double scale = std::strtod(scale_token.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale)) {
    throw ParseError("invalid scale '" + scale_token + "'", reader.last_offset());
  }
  const std::size_t start = reader.data_start();
  const std::size_t needed = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4;
  if (bytes.size() - start < needed) {
    throw ParseError("truncated data: need " + std::to_string(needed) + " bytes", bytes.size());
  }
  const bool little = scale < 0;
  const bool swap = little != (std::endian::native == std::endian::little);
  DisparityMap map(height, width);
  const char* src = bytes.data() + start;
  for (long r = height - 1; r >= 0; --r) {
    for (long c = 0; c < width; ++c) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      src += 4;
      if (swap) bits = byteswap32(bits);
      map(r, c) = std::bit_cast<float>(bits);
    }
  }
  if (!map.allFinite()) throw NumericFault("read_pfm");
  return map;
}

void write_pfm(const std::string& path, const DisparityMap& map) { write_file(path, encode_pfm(map)); }
DisparityMap read_pfm(const std::string& path) { return decode_pfm(read_file(path)); }

std::string encode_pgm(const Plane<std::uint8_t>& pixels) {
  std::string out = "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
  for (Index r = 0; r < pixels.rows(); ++r)
    for (Index c = 0; c < pixels.cols(); ++c) out.push_back(static_cast<char>(pixels(r, c)));
  return out;
}

Plane<std::uint8_t> decode_pgm(const std::string& bytes) {
  HeaderReader reader(bytes);
  const std::string magic = reader.token("PGM magic");
  if (magic != "P5") throw ParseError("unsupported PGM magic '" + magic + "'", reader.last_offset());
  const long width = reader.positive_integer("width");
  const long height = reader.positive_integer("height");
  const long maxval = reader.positive_integer("maxval");
  if (maxval != 255) throw ParseError("only 8-bit PGM is supported", reader.last_offset());
  const std::size_t start = reader.data_start();
  const std::size_t needed = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - start < needed) throw ParseError("truncated PGM data", bytes.size());
  Plane<std::uint8_t> out(height, width);
  for (long r = 0; r < height; ++r)
    for (long c = 0; c < width; ++c) out(r, c) = static_cast<std::uint8_t>(bytes[start + r * width + c]);
  return out;
}

void write_pgm(const std::string& path, const Plane<std::uint8_t>& pixels) { write_file(path, encode_pgm(pixels)); }
Plane<std::uint8_t> read_pgm(const std::string& path) { return decode_pgm(read_file(path)); }

Plane<std::uint8_t> quantize(const Image& gray) {
  if (gray.channels != 1) throw ContractViolation("quantize expects a single-channel image");
  Plane<std::uint8_t> out(gray.height, gray.width);
  for (Index h = 0; h < gray.height; ++h)
    for (Index w = 0; w < gray.width; ++w) {
      const float v = std::clamp(gray.at(h, w), 0.0f, 1.0f);
      out(h, w) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

Image dequantize(const Plane<std::uint8_t>& pixels) {
  Image out(pixels.rows(), pixels.cols(), 1);
  for (Index h = 0; h < out.height; ++h)
    for (Index w = 0; w < out.width; ++w) out.at(h, w) = static_cast<float>(pixels(h, w)) / 255.0f;
  return out;
}

void write_png(const std::string& path, Index height, Index width, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw ContractViolation("png channels must be 1 or 3");
  if (static_cast<Index>(pixels.size()) != height * width * channels) {
    throw ContractViolation("png pixel buffer size mismatch");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot create " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encoding failed for " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png(const std::string& path, const Plane<std::uint8_t>& gray) {
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(gray.size()));
  for (Index r = 0; r < gray.rows(); ++r)
    for (Index c = 0; c < gray.cols(); ++c) buf[r * gray.cols() + c] = gray(r, c);
  write_png(path, gray.rows(), gray.cols(), 1, buf);
}

std::vector<std::uint8_t> colorize_disparity(const DisparityMap& map, double max_disparity) {
  static constexpr std::array<std::array<double, 3>, 6> stops{{
      {0, 0, 128}, {0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}, {128, 0, 0}}};
  std::vector<std::uint8_t> rgb;
  rgb.reserve(static_cast<std::size_t>(map.size()) * 3);
  for (Index r = 0; r < map.rows(); ++r)
    for (Index c = 0; c < map.cols(); ++c) {
      const double t = max_disparity > 0 ? std::clamp(map(r, c) / max_disparity, 0.0, 1.0) : 0.0;
      const double x = t * static_cast<double>(stops.size() - 1);
      const auto i = std::min<std::size_t>(static_cast<std::size_t>(x), stops.size() - 2);
      const double f = x - static_cast<double>(i);
      for (int k = 0; k < 3; ++k) {
        rgb.push_back(static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k]))));
      }
    }
  return rgb;
}

}  // namespace stereoagg
