#include "stereo/model/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "stereo/error.hpp"
#include "stereo/util.hpp"

namespace stereo {

const Tensorf& ModelWeights::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("weights: missing parameter '" + name + "'");
  return it->second;
}

std::span<const float> ModelWeights::bias(const std::string& layer) const {
  const Tensorf& t = at(layer + ".bias");
  return {t.data(), static_cast<size_t>(t.size())};
}

void ModelWeights::validate() const {
  const auto manifest = parameter_manifest(arch_);
  if (params_.size() != manifest.size())
    throw std::invalid_argument("weights: parameter count mismatch, expected " +
                                std::to_string(manifest.size()) + " got " +
                                std::to_string(params_.size()));
  for (const ParamSpec& spec : manifest) {
    const Tensorf& t = at(spec.name);
    if (!(t.shape() == spec.shape))
      throw std::invalid_argument("weights: parameter '" + spec.name +
                                  "' has shape " + to_string(t.shape()) +
                                  ", expected " + to_string(spec.shape));
    if (!t.all_finite())
      throw std::invalid_argument("weights: parameter '" + spec.name +
                                  "' contains non-finite values");
  }
}

ModelWeights ModelWeights::random(const ArchDescriptor& arch, std::uint64_t seed) {
  ModelWeights w;
  w.arch_ = arch;
  std::uint64_t state = splitmix64(seed ^ 0x5741524453495257ULL);
  for (const ParamSpec& spec : parameter_manifest(arch)) {
    Tensorf t(spec.shape);
    const bool is_bias = spec.name.ends_with(".bias");
    if (!is_bias) {
      const Shape4& s = spec.shape;
      const float limit = 1.0f / std::sqrt(float(s.c * s.h * s.w));
      for (Index i = 0; i < t.size(); ++i) {
        state = splitmix64(state);
        t.data()[i] = (2.0f * unit_float(state) - 1.0f) * limit;
      }
    }
    w.params_.emplace(spec.name, std::move(t));
  }
  return w;
}

ModelWeights ModelWeights::zeros(const ArchDescriptor& arch) {
  ModelWeights w;
  w.arch_ = arch;
  for (const ParamSpec& spec : parameter_manifest(arch))
    w.params_.emplace(spec.name, Tensorf(spec.shape));
  return w;
}

void ModelWeights::set(const std::string& name, Tensorf value) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("weights: unknown parameter '" + name + "'");
  if (!(it->second.shape() == value.shape()))
    throw std::invalid_argument("weights: shape mismatch for '" + name + "'");
  it->second = std::move(value);
}

namespace {

constexpr char kMagic[4] = {'I', 'R', 'S', 'W'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

}  // namespace

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
  weights.validate();

  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : weights.params()) {
    const Shape4& s = tensor.shape();
    header[name] = {{"shape", {s.n, s.c, s.h, s.w}},
                    {"offset", offset},
                    {"dtype", "f32"}};
    offset += std::uint64_t(tensor.size()) * 4;
  }
  const std::string header_text = header.dump();

  std::string blob;
  blob.reserve(4 + 1 + 4 + header_text.size() + offset);
  blob.append(kMagic, 4);
  blob.push_back(char(kVersion));
  put_u32le(blob, std::uint32_t(header_text.size()));
  blob += header_text;
  static_assert(std::endian::native == std::endian::little,
                "float blobs are written via memcpy and assume a little-endian host");
  for (const auto& [name, tensor] : weights.params()) {
    const size_t bytes = size_t(tensor.size()) * 4;
    const size_t pos = blob.size();
    blob.resize(pos + bytes);
    std::memcpy(blob.data() + pos, tensor.data(), bytes);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(blob.data(), std::streamsize(blob.size()));
  if (!f) throw IoError("short write: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path, const ArchDescriptor& arch) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight file: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (blob.size() < 9 || std::memcmp(blob.data(), kMagic, 4) != 0)
    throw FormatError("weight file: bad magic in " + path.string());
  if (std::uint8_t(blob[4]) != kVersion)
    throw FormatError("weight file: unsupported version in " + path.string());
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= std::uint32_t(std::uint8_t(blob[5 + i])) << (8 * i);
  if (blob.size() < 9 + size_t(header_len))
    throw FormatError("weight file: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(9, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("weight file: invalid JSON header: " + std::string(e.what()));
  }

  const char* data = blob.data() + 9 + header_len;
  const std::uint64_t data_len = blob.size() - 9 - header_len;

  ModelWeights w = ModelWeights::zeros(arch);
  const auto manifest = parameter_manifest(arch);
  if (header.size() != manifest.size())
    throw FormatError("weight file: " + std::to_string(header.size()) +
                      " parameters, architecture needs " +
                      std::to_string(manifest.size()));
  for (const ParamSpec& spec : manifest) {
    if (!header.contains(spec.name))
      throw FormatError("weight file: missing parameter '" + spec.name + "'");
    const auto& entry = header.at(spec.name);
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    if (shape.size() != 4 ||
        !(Shape4{shape[0], shape[1], shape[2], shape[3]} == spec.shape))
      throw FormatError("weight file: shape mismatch for '" + spec.name + "'");
    if (entry.at("dtype").get<std::string>() != "f32")
      throw FormatError("weight file: unsupported dtype for '" + spec.name + "'");
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    Tensorf t(spec.shape);
    const std::uint64_t bytes = std::uint64_t(t.size()) * 4;
    if (off + bytes > data_len)
      throw FormatError("weight file: blob out of bounds for '" + spec.name + "'");
    std::memcpy(t.data(), data + off, bytes);
    if (!t.all_finite())
      throw FormatError("weight file: non-finite values in '" + spec.name + "'");
    w.set(spec.name, std::move(t));
  }
  return w;
}

}  // namespace stereo
