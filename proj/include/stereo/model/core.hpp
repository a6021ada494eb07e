#pragma once

#include <utility>
#include <vector>

#include "stereo/image.hpp"
#include "stereo/model/weights.hpp"
#include "stereo/tensor.hpp"

// Iterative stereo inference: shared-weight feature encoders at 1/4
// resolution, a row-wise correlation pyramid, coarse-to-fine convolutional
// GRU updates of a disparity field, and learned convex upsampling back to
// full resolution. Forward inference only.

namespace stereo {

struct PadRecord {
  Index orig_h = 0, orig_w = 0;
  Index pad_h = 0, pad_w = 0;
};

// Edge-replicates right/bottom so height and width become the least multiples
// of `multiple` not below the input's.
std::pair<Tensorf, PadRecord> pad_to_multiple(const Tensorf& image, int multiple = 32);

// (1, 3, h, w) in [-1, 1]; single-channel input is replicated to three.
Tensorf normalize_image(const ImageU8& img);

// Row-wise matching-cost volume. Level 0 is (1, rows, cols, cols) holding
// dot(fL[:, i, j], fR[:, i, k]) / sqrt(F); level l mean-pools the last axis
// of level 0 by 2^l.
struct CorrelationPyramid {
  std::vector<Tensorf> levels;

  Index rows() const { return levels.empty() ? 0 : levels[0].shape().c; }
  Index cols() const { return levels.empty() ? 0 : levels[0].shape().h; }
};

// One hidden tensor per GRU level, finest (1/4 resolution) first. Every
// element stays in [-1, 1]: states are tanh-initialized and each update is a
// convex blend with a tanh candidate.
struct GruState {
  std::vector<Tensorf> hidden;
};

// Per-level context features feeding the GRU gates, finest first.
struct ContextSet {
  std::vector<Tensorf> ctx;
};

struct GruOutput {
  GruState state;
  Tensorf delta;  // (1, 1, h4, w4) disparity increment
};

std::pair<Tensorf, Tensorf> extract_features(const Tensorf& left, const Tensorf& right,
                                             const ModelWeights& weights);
std::pair<ContextSet, GruState> extract_context(const Tensorf& left,
                                                const ModelWeights& weights);

CorrelationPyramid build_correlation_pyramid(const Tensorf& feat_left,
                                             const Tensorf& feat_right,
                                             int levels = 4);

// Samples 2*radius+1 correlation values per pyramid level at fractional
// coordinates (j - d + delta) / 2^l around the current estimate; output has
// levels*(2*radius+1) channels, level-major.
Tensorf lookup(const CorrelationPyramid& pyramid, const Tensorf& disparity,
               int radius = 4);

// One coarse-to-fine pass over all GRU levels. Only the finest level sees the
// correlation features and emits a disparity increment.
GruOutput gru_update(const GruState& state, const ContextSet& context,
                     const Tensorf& corr_features, const Tensorf& disparity,
                     const ModelWeights& weights);

// Mask head on the finest hidden state, (1, 144, h4, w4) logits.
Tensorf upsample_mask_logits(const GruState& state, const ModelWeights& weights);

// Each full-resolution pixel is 4x the softmax-weighted combination of the
// 3x3 coarse neighborhood (edge-clamped) of its parent cell.
Tensorf convex_upsample(const Tensorf& disparity, const Tensorf& mask_logits);

// Full pipeline. iters < 0 selects the descriptor default. Deterministic:
// identical inputs, weights and iteration count give bit-identical maps.
DisparityMap infer(const ImageU8& left, const ImageU8& right,
                   const ModelWeights& weights, int iters = -1);

}  // namespace stereo
