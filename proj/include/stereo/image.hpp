#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stereo/tensor.hpp"

namespace stereo {

// Interleaved 8-bit image, row-major (h, w, c). c is 1 or 3.
struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
};

// Per-pixel disparity with a validity mask. Invalid pixels are excluded from
// every statistic; no sentinel values are used internally.
struct DisparityMap {
  int width = 0, height = 0;
  std::vector<float> disparity;      // row-major (h, w)
  std::vector<std::uint8_t> valid;   // same layout, 0/1

  DisparityMap() = default;
  DisparityMap(int w, int h)
      : width(w), height(h),
        disparity(static_cast<size_t>(w) * h, 0.0f),
        valid(static_cast<size_t>(w) * h, 1) {}

  size_t index(int y, int x) const { return static_cast<size_t>(y) * width + x; }
  float& at(int y, int x) { return disparity[index(y, x)]; }
  float at(int y, int x) const { return disparity[index(y, x)]; }
  bool is_valid(int y, int x) const { return valid[index(y, x)] != 0; }
  size_t valid_count() const {
    size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

struct SampleMeta {
  std::string pass;          // "clean" / "final" where the dataset has passes
  double fx = 0.0;           // focal length in pixels, when known
  double baseline = 0.0;     // baseline in meters, when known
};

// A rectified pair with optional ground truth.
struct StereoSample {
  ImageU8 left, right;
  std::optional<DisparityMap> gt;
  std::string dataset;
  std::string frame;
  SampleMeta meta;
};

// (1, c, h, w) float tensor from an interleaved image, values kept in [0, 255].
inline Tensorf image_to_tensor(const ImageU8& img) {
  Tensorf t(1, img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t(0, c, y, x) = static_cast<float>(img.at(y, x, c));
  return t;
}

inline Tensorf disparity_to_tensor(const DisparityMap& d) {
  Tensorf t(1, 1, d.height, d.width);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) t(0, 0, y, x) = d.at(y, x);
  return t;
}

}  // namespace stereo
