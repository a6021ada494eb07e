#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "stereo/model/arch.hpp"
#include "stereo/tensor.hpp"

namespace stereo {

// Named parameter map plus the descriptor it satisfies. Immutable after
// construction/load; shareable across concurrent inference calls.
class ModelWeights {
 public:
  ModelWeights() = default;

  const ArchDescriptor& arch() const { return arch_; }
  const std::map<std::string, Tensorf>& params() const { return params_; }

  const Tensorf& at(const std::string& name) const;
  // Bias tensors are stored (co, 1, 1, 1); this views one as a flat span.
  std::span<const float> bias(const std::string& layer) const;
  const Tensorf& weight(const std::string& layer) const { return at(layer + ".weight"); }

  // Checks manifest coverage, declared shapes and finiteness.
  void validate() const;

  // Deterministic uniform init, scaled per layer by 1/sqrt(fan-in); biases 0.
  // The stream is a fixed splitmix64 sequence, so files are reproducible
  // across platforms.
  static ModelWeights random(const ArchDescriptor& arch, std::uint64_t seed);
  static ModelWeights zeros(const ArchDescriptor& arch);

  // Test hook: replace one parameter (shape-checked).
  void set(const std::string& name, Tensorf value);

 private:
  ArchDescriptor arch_;
  std::map<std::string, Tensorf> params_;
};

// Binary weight file: magic "IRSW", version byte 0x01, little-endian uint32
// header length, UTF-8 JSON header mapping parameter name to {shape, offset,
// dtype}, then raw little-endian float32 blobs. Offsets are relative to the
// end of the header.
void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path, const ArchDescriptor& arch);

}  // namespace stereo
