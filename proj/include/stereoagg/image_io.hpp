#pragma once

#include <string>

#include "stereoagg/image.hpp"

namespace stereoagg {

// PFM ("Pf", single channel). Encoding writes little-endian data (negative
// scale) with rows stored bottom to top. Decoding accepts either byte order.
std::string encode_pfm(const DisparityMap& map);
DisparityMap decode_pfm(const std::string& bytes);
void write_pfm(const std::string& path, const DisparityMap& map);
DisparityMap read_pfm(const std::string& path);

// 8-bit binary PGM (P5, maxval 255).
std::string encode_pgm(const Plane<std::uint8_t>& pixels);
Plane<std::uint8_t> decode_pgm(const std::string& bytes);
void write_pgm(const std::string& path, const Plane<std::uint8_t>& pixels);
Plane<std::uint8_t> read_pgm(const std::string& path);

// Grayscale image <-> 8-bit plane, rounding to the nearest level.
Plane<std::uint8_t> quantize(const Image& gray);
Image dequantize(const Plane<std::uint8_t>& pixels);

// Writes an 8-bit gray (channels = 1) or RGB (channels = 3) PNG.
void write_png(const std::string& path, Index height, Index width, int channels,
               const std::vector<std::uint8_t>& pixels);
void write_png(const std::string& path, const Plane<std::uint8_t>& gray);

// Fixed linear color ramp for disparity in [0, max_disparity]: dark blue,
// blue, cyan, yellow, red, dark red at evenly spaced stops. Values outside
// the range are clamped. Returns interleaved RGB.
std::vector<std::uint8_t> colorize_disparity(const DisparityMap& map, double max_disparity);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace stereoagg
