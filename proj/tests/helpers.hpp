#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "stereo/image.hpp"
#include "stereo/tensor.hpp"

namespace testutil {

inline stereo::Tensorf random_tensor(stereo::Shape4 shape, std::mt19937_64& rng,
                                     float lo = -1.0f, float hi = 1.0f) {
  stereo::Tensorf t(shape);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (stereo::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

inline stereo::DisparityMap random_disparity(int w, int h, std::mt19937_64& rng,
                                             float lo = 0.0f, float hi = 64.0f,
                                             double valid_prob = 1.0) {
  stereo::DisparityMap d(w, h);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (size_t i = 0; i < d.disparity.size(); ++i) {
    d.disparity[i] = dist(rng);
    d.valid[i] = coin(rng) < valid_prob ? 1 : 0;
  }
  return d;
}

inline stereo::ImageU8 random_image(int w, int h, int c, std::mt19937_64& rng) {
  stereo::ImageU8 img(w, h, c);
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(dist(rng));
  return img;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stereokit_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
