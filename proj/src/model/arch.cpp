#include "stereo/model/arch.hpp"

#include <stdexcept>

#include "json.hpp"

namespace stereo {

int ArchDescriptor::gru_input_channels(int level) const {
  if (level < 0 || level >= gru_levels)
    throw std::invalid_argument("gru_input_channels: bad level");
  int ch = context_channels;
  if (level == 0) {
    ch += motion_channels;                      // correlation + disparity features
    if (gru_levels > 1) ch += hidden_channels;  // upsampled coarser state
  } else if (level == gru_levels - 1) {
    ch += hidden_channels;                      // pooled finer state
  } else {
    ch += 2 * hidden_channels;                  // pooled finer + upsampled coarser
  }
  return ch;
}

void ArchDescriptor::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string("arch: ") + what + " must be >= 1");
  };
  positive(feature_channels, "feature_channels");
  positive(enc1_channels, "enc1_channels");
  positive(enc2_channels, "enc2_channels");
  positive(context_channels, "context_channels");
  positive(hidden_channels, "hidden_channels");
  positive(head_channels, "head_channels");
  positive(gru_levels, "gru_levels");
  positive(corr_levels, "corr_levels");
  if (motion_channels < 2)
    throw std::invalid_argument("arch: motion_channels must be >= 2");
  if (corr_radius < 0)
    throw std::invalid_argument("arch: corr_radius must be >= 0");
  if (default_iters < 0)
    throw std::invalid_argument("arch: default_iters must be >= 0");
  if (gru_levels > 3)
    throw std::invalid_argument("arch: at most 3 GRU levels (1/4, 1/8, 1/16)");
}

ArchDescriptor ArchDescriptor::tiny() {
  ArchDescriptor a;
  a.feature_channels = 32;
  a.enc1_channels = 16;
  a.enc2_channels = 32;
  a.context_channels = 16;
  a.hidden_channels = 16;
  a.motion_channels = 16;
  a.head_channels = 32;
  a.default_iters = 8;
  return a;
}

std::vector<ParamSpec> parameter_manifest(const ArchDescriptor& a) {
  a.validate();
  std::vector<ParamSpec> out;
  auto conv = [&out](const std::string& name, Index co, Index ci, Index k) {
    out.push_back({name + ".weight", Shape4{co, ci, k, k}});
    out.push_back({name + ".bias", Shape4{co, 1, 1, 1}});
  };

  const Index e1 = a.enc1_channels, e2 = a.enc2_channels;
  for (const std::string stem : {"fnet", "cnet"}) {
    conv(stem + ".conv1", e1, 3, 7);   // stride 2
    conv(stem + ".conv2", e2, e1, 3);  // stride 2
    conv(stem + ".res1.conv1", e2, e2, 3);
    conv(stem + ".res1.conv2", e2, e2, 3);
    conv(stem + ".res2.conv1", e2, e2, 3);
    conv(stem + ".res2.conv2", e2, e2, 3);
  }
  conv("fnet.out", a.feature_channels, e2, 1);
  for (int l = 0; l < a.gru_levels; ++l) {
    conv("cnet.ctx" + std::to_string(l), a.context_channels, e2, 1);
    conv("cnet.hid" + std::to_string(l), a.hidden_channels, e2, 1);
  }

  const Index m = a.motion_channels;
  conv("menc.corr1", m, a.corr_channels(), 1);
  conv("menc.corr2", m, m, 3);
  conv("menc.disp1", m, 1, 7);
  conv("menc.disp2", m, m, 3);
  conv("menc.fuse", m - 1, 2 * m, 3);

  for (int l = 0; l < a.gru_levels; ++l) {
    const Index in = a.hidden_channels + a.gru_input_channels(l);
    const std::string g = "gru" + std::to_string(l);
    conv(g + ".convz", a.hidden_channels, in, 3);
    conv(g + ".convr", a.hidden_channels, in, 3);
    conv(g + ".convq", a.hidden_channels, in, 3);
  }

  conv("head.conv1", a.head_channels, a.hidden_channels, 3);
  conv("head.conv2", 1, a.head_channels, 3);
  conv("mask.conv1", a.head_channels, a.hidden_channels, 3);
  conv("mask.conv2", a.mask_channels(), a.head_channels, 1);
  return out;
}

std::string arch_to_json(const ArchDescriptor& a) {
  nlohmann::json j = {
      {"feature_channels", a.feature_channels},
      {"enc1_channels", a.enc1_channels},
      {"enc2_channels", a.enc2_channels},
      {"context_channels", a.context_channels},
      {"hidden_channels", a.hidden_channels},
      {"motion_channels", a.motion_channels},
      {"head_channels", a.head_channels},
      {"gru_levels", a.gru_levels},
      {"corr_levels", a.corr_levels},
      {"corr_radius", a.corr_radius},
      {"default_iters", a.default_iters},
  };
  return j.dump(2);
}

ArchDescriptor arch_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ArchDescriptor a;
  a.feature_channels = j.value("feature_channels", a.feature_channels);
  a.enc1_channels = j.value("enc1_channels", a.enc1_channels);
  a.enc2_channels = j.value("enc2_channels", a.enc2_channels);
  a.context_channels = j.value("context_channels", a.context_channels);
  a.hidden_channels = j.value("hidden_channels", a.hidden_channels);
  a.motion_channels = j.value("motion_channels", a.motion_channels);
  a.head_channels = j.value("head_channels", a.head_channels);
  a.gru_levels = j.value("gru_levels", a.gru_levels);
  a.corr_levels = j.value("corr_levels", a.corr_levels);
  a.corr_radius = j.value("corr_radius", a.corr_radius);
  a.default_iters = j.value("default_iters", a.default_iters);
  a.validate();
  return a;
}

}  // namespace stereo
