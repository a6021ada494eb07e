#pragma once

#include <string>
#include <vector>

#include "stereo/tensor.hpp"

namespace stereo {

// Every channel count and loop depth of the recurrent stereo network lives
// here so tests can shrink the whole model with one struct. The defaults are
// the standard configuration: 256-channel features at 1/4 resolution, three
// GRU levels of 128 hidden channels at 1/4, 1/8, 1/16, a 4-level correlation
// pyramid with lookup radius 4, and 32 refinement iterations.
struct ArchDescriptor {
  int feature_channels = 256;  // correlation feature width
  int enc1_channels = 64;      // encoder stem width at 1/2 resolution
  int enc2_channels = 96;      // encoder trunk width at 1/4 resolution
  int context_channels = 128;  // per-level GRU context input
  int hidden_channels = 128;   // per-level GRU state
  int motion_channels = 128;   // correlation/disparity encoder output
  int head_channels = 256;     // disparity and mask head hidden width
  int gru_levels = 3;
  int corr_levels = 4;
  int corr_radius = 4;
  int default_iters = 32;

  int corr_channels() const { return corr_levels * (2 * corr_radius + 1); }
  // 4x convex upsampling: 16 sub-pixels, 9 neighborhood taps each.
  int mask_channels() const { return 9 * 16; }
  // GRU gate input width (hidden excluded) for the given level; level 0 is
  // the finest.
  int gru_input_channels(int level) const;

  void validate() const;

  static ArchDescriptor standard() { return {}; }
  // Laptop-scale variant used by the test suites.
  static ArchDescriptor tiny();

  bool operator==(const ArchDescriptor&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape4 shape;
};

// Complete list of parameter names and shapes required by a descriptor, in a
// fixed canonical order.
std::vector<ParamSpec> parameter_manifest(const ArchDescriptor& arch);

std::string arch_to_json(const ArchDescriptor& arch);
ArchDescriptor arch_from_json(const std::string& text);

}  // namespace stereo
