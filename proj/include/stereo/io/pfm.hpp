#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stereo/image.hpp"

namespace stereo {

// Grayscale PFM ("Pf"): width/height line, then a scale line whose sign
// encodes endianness (negative = little-endian), then rows bottom-up as raw
// 32-bit floats. Non-finite values decode as invalid pixels; invalid pixels
// encode as +inf, so write-then-read restores valid content bit-exactly.
DisparityMap read_pfm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pfm(const DisparityMap& map);

DisparityMap read_pfm_file(const std::filesystem::path& path);
void write_pfm_file(const DisparityMap& map, const std::filesystem::path& path);

}  // namespace stereo
