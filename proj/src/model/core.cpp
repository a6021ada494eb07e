#include "stereo/model/core.hpp"

#include <cmath>
#include <cstring>

#include "stereo/kernels.hpp"

namespace stereo {

namespace {

Tensorf conv(const Tensorf& x, const ModelWeights& w, const std::string& layer,
             int stride, int pad) {
  return conv2d(x, w.weight(layer), w.bias(layer), stride, pad);
}

Tensorf residual_block(const Tensorf& x, const ModelWeights& w, const std::string& name) {
  Tensorf y = relu(conv(x, w, name + ".conv1", 1, 1));
  y = conv(y, w, name + ".conv2", 1, 1);
  Tensorf out(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const float v = x.data()[i] + y.data()[i];
    out.data()[i] = v > 0.0f ? v : 0.0f;
  }
  return out;
}

// Shared stem: 1/2 via a strided 7x7, 1/4 via a strided 3x3, then two
// residual blocks at 1/4.
Tensorf encoder_trunk(const Tensorf& x, const ModelWeights& w, const std::string& stem) {
  Tensorf t = relu(conv(x, w, stem + ".conv1", 2, 3));
  t = relu(conv(t, w, stem + ".conv2", 2, 1));
  t = residual_block(t, w, stem + ".res1");
  t = residual_block(t, w, stem + ".res2");
  return t;
}

Tensorf gru_cell(const Tensorf& h, const Tensorf& x, const ModelWeights& w,
                 const std::string& name) {
  Tensorf hx = concat_channels<float>({&h, &x});
  Tensorf z = sigmoid(conv(hx, w, name + ".convz", 1, 1));
  Tensorf r = sigmoid(conv(hx, w, name + ".convr", 1, 1));
  Tensorf rh(h.shape());
  for (Index i = 0; i < h.size(); ++i) rh.data()[i] = r.data()[i] * h.data()[i];
  Tensorf rhx = concat_channels<float>({&rh, &x});
  Tensorf q = tanh(conv(rhx, w, name + ".convq", 1, 1));
  Tensorf out(h.shape());
  for (Index i = 0; i < h.size(); ++i) {
    const float zi = z.data()[i];
    out.data()[i] = (1.0f - zi) * h.data()[i] + zi * q.data()[i];
  }
  return out;
}

Tensorf motion_features(const Tensorf& corr, const Tensorf& disp,
                        const ModelWeights& w) {
  Tensorf c = relu(conv(corr, w, "menc.corr1", 1, 0));
  c = relu(conv(c, w, "menc.corr2", 1, 1));
  Tensorf d = relu(conv(disp, w, "menc.disp1", 1, 3));
  d = relu(conv(d, w, "menc.disp2", 1, 1));
  Tensorf cd = concat_channels<float>({&c, &d});
  Tensorf fused = relu(conv(cd, w, "menc.fuse", 1, 1));
  return concat_channels<float>({&fused, &disp});
}

}  // namespace

std::pair<Tensorf, PadRecord> pad_to_multiple(const Tensorf& image, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  const Shape4& s = image.shape();
  const Index th = (s.h + multiple - 1) / multiple * multiple;
  const Index tw = (s.w + multiple - 1) / multiple * multiple;
  PadRecord rec{s.h, s.w, th - s.h, tw - s.w};
  if (rec.pad_h == 0 && rec.pad_w == 0) return {image, rec};
  return {pad_edge(image, rec.pad_h, rec.pad_w), rec};
}

Tensorf normalize_image(const ImageU8& img) {
  Tensorf t(1, 3, img.height, img.width);
  for (Index c = 0; c < 3; ++c) {
    const int sc = img.channels == 3 ? int(c) : 0;
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x)
        t(0, c, y, x) = float(img.at(int(y), int(x), sc)) / 127.5f - 1.0f;
  }
  return t;
}

std::pair<Tensorf, Tensorf> extract_features(const Tensorf& left, const Tensorf& right,
                                             const ModelWeights& weights) {
  if (!(left.shape() == right.shape()))
    throw std::invalid_argument("extract_features: image shape mismatch");
  Tensorf fl = conv(encoder_trunk(left, weights, "fnet"), weights, "fnet.out", 1, 0);
  Tensorf fr = conv(encoder_trunk(right, weights, "fnet"), weights, "fnet.out", 1, 0);
  return {std::move(fl), std::move(fr)};
}

std::pair<ContextSet, GruState> extract_context(const Tensorf& left,
                                                const ModelWeights& weights) {
  const ArchDescriptor& arch = weights.arch();
  Tensorf trunk = encoder_trunk(left, weights, "cnet");
  ContextSet ctx;
  GruState state;
  for (int l = 0; l < arch.gru_levels; ++l) {
    ctx.ctx.push_back(relu(conv(trunk, weights, "cnet.ctx" + std::to_string(l), 1, 0)));
    state.hidden.push_back(tanh(conv(trunk, weights, "cnet.hid" + std::to_string(l), 1, 0)));
    if (l + 1 < arch.gru_levels) trunk = downsample2x_mean(trunk);
  }
  return {std::move(ctx), std::move(state)};
}

CorrelationPyramid build_correlation_pyramid(const Tensorf& feat_left,
                                             const Tensorf& feat_right,
                                             int levels) {
  if (!(feat_left.shape() == feat_right.shape()))
    throw std::invalid_argument("correlation: feature shape mismatch");
  if (levels < 1) throw std::invalid_argument("correlation: need levels >= 1");
  const Shape4& s = feat_left.shape();
  const Index fc = s.c, rows = s.h, cols = s.w;
  const float scale = 1.0f / std::sqrt(float(fc));

  CorrelationPyramid pyr;
  Tensorf level0(1, rows, cols, cols);
  using Mat = Tensorf::MatrixType;
  for (Index i = 0; i < rows; ++i) {
    // feature maps viewed as (channels) x (pixels); one row is a contiguous
    // block of columns
    auto lcols = feat_left.channels(0).block(0, i * cols, fc, cols);
    auto rcols = feat_right.channels(0).block(0, i * cols, fc, cols);
    Eigen::Map<Mat> dst(level0.data() + i * cols * cols, cols, cols);
    dst.noalias() = (lcols.transpose() * rcols) * scale;
  }
  pyr.levels.push_back(std::move(level0));
  // pool each level straight from level 0 so level l equals
  // avg_pool_last(level0, 2^l) bit-for-bit
  for (int l = 1; l < levels; ++l)
    pyr.levels.push_back(avg_pool_last(pyr.levels[0], 1 << l));
  return pyr;
}

Tensorf lookup(const CorrelationPyramid& pyramid, const Tensorf& disparity,
               int radius) {
  if (radius < 0) throw std::invalid_argument("lookup: radius must be >= 0");
  if (pyramid.levels.empty()) throw std::invalid_argument("lookup: empty pyramid");
  const Index rows = pyramid.rows(), cols = pyramid.cols();
  const Shape4& ds = disparity.shape();
  if (ds.n != 1 || ds.c != 1 || ds.h != rows || ds.w != cols)
    throw std::invalid_argument("lookup: disparity shape mismatch");

  const int levels = int(pyramid.levels.size());
  const int taps = 2 * radius + 1;
  Tensorf out(1, Index(levels) * taps, rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double d = disparity(0, 0, i, j);
      for (int l = 0; l < levels; ++l) {
        const auto row = pyramid.levels[l].row_span(0, i, j);
        const double inv = 1.0 / double(1 << l);
        for (int t = 0; t < taps; ++t) {
          const double x = (double(j) - d + double(t - radius)) * inv;
          out(0, Index(l) * taps + t, i, j) = bilinear_sample_1d(row, x);
        }
      }
    }
  }
  return out;
}

GruOutput gru_update(const GruState& state, const ContextSet& context,
                     const Tensorf& corr_features, const Tensorf& disparity,
                     const ModelWeights& weights) {
  const ArchDescriptor& arch = weights.arch();
  const int levels = arch.gru_levels;
  if (int(state.hidden.size()) != levels || int(context.ctx.size()) != levels)
    throw std::invalid_argument("gru_update: level count mismatch");

  Tensorf motion = motion_features(corr_features, disparity, weights);

  GruState next = state;
  // coarse to fine; coarser levels see the finer state of the previous
  // iteration, finer levels see the freshly updated coarser state. Levels are
  // ceil-halved, so upsampled states are cropped back to the finer grid.
  auto up_to = [](const Tensorf& coarse, const Shape4& fine) {
    return crop_spatial(upsample2x_bilinear(coarse), fine.h, fine.w);
  };
  for (int l = levels - 1; l >= 0; --l) {
    std::vector<Tensorf> owned;
    owned.reserve(2);  // parts keeps raw pointers into owned
    std::vector<const Tensorf*> parts;
    parts.push_back(&context.ctx[l]);
    if (l == levels - 1 && l > 0) {
      owned.push_back(downsample2x_mean(state.hidden[l - 1]));
      parts.push_back(&owned.back());
    } else if (l > 0) {
      owned.push_back(downsample2x_mean(state.hidden[l - 1]));
      parts.push_back(&owned.back());
      owned.push_back(up_to(next.hidden[l + 1], state.hidden[l].shape()));
      parts.push_back(&owned.back());
    } else {
      if (levels > 1) {
        owned.push_back(up_to(next.hidden[1], state.hidden[0].shape()));
        parts.push_back(&owned.back());
      }
      parts.push_back(&motion);
    }
    Tensorf x = parts.size() == 2
                    ? concat_channels<float>({parts[0], parts[1]})
                    : concat_channels<float>({parts[0], parts[1], parts[2]});
    next.hidden[l] = gru_cell(next.hidden[l], x, weights, "gru" + std::to_string(l));
  }

  Tensorf hd = relu(conv(next.hidden[0], weights, "head.conv1", 1, 1));
  Tensorf delta = conv(hd, weights, "head.conv2", 1, 1);
  return {std::move(next), std::move(delta)};
}

Tensorf upsample_mask_logits(const GruState& state, const ModelWeights& weights) {
  Tensorf m = relu(conv(state.hidden[0], weights, "mask.conv1", 1, 1));
  return conv(m, weights, "mask.conv2", 1, 0);
}

Tensorf convex_upsample(const Tensorf& disparity, const Tensorf& mask_logits) {
  const Shape4& ds = disparity.shape();
  const Shape4& ms = mask_logits.shape();
  if (ds.n != 1 || ds.c != 1)
    throw std::invalid_argument("convex_upsample: disparity must be (1,1,h,w)");
  if (ms.c != 9 * 16 || ms.n != 1 || ms.h != ds.h || ms.w != ds.w)
    throw std::invalid_argument("convex_upsample: mask channel mismatch, got " +
                                to_string(ms) + " for field " + to_string(ds));

  const Index h = ds.h, w = ds.w;
  // regroup (1, 144, h, w) as (16, 9, h, w): same memory layout, so the
  // channel softmax normalizes each 9-tap neighborhood per sub-pixel
  Tensorf grouped(16, 9, h, w);
  std::memcpy(grouped.data(), mask_logits.data(), sizeof(float) * ms.size());
  Tensorf weights = softmax_channels(grouped);

  Tensorf out(1, 1, 4 * h, 4 * w);
  for (Index y = 0; y < 4 * h; ++y) {
    const Index ci = y / 4;
    for (Index x = 0; x < 4 * w; ++x) {
      const Index cj = x / 4;
      const Index sub = (y % 4) * 4 + (x % 4);
      float acc = 0.0f;
      for (int t = 0; t < 9; ++t) {
        const Index ni = std::clamp<Index>(ci + t / 3 - 1, 0, h - 1);
        const Index nj = std::clamp<Index>(cj + t % 3 - 1, 0, w - 1);
        acc += weights(sub, t, ci, cj) * disparity(0, 0, ni, nj);
      }
      out(0, 0, y, x) = 4.0f * acc;
    }
  }
  return out;
}

DisparityMap infer(const ImageU8& left, const ImageU8& right,
                   const ModelWeights& weights, int iters) {
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("infer: left/right dimensions differ");
  if (left.width < 1 || left.height < 1)
    throw std::invalid_argument("infer: empty image");
  weights.validate();
  const ArchDescriptor& arch = weights.arch();
  if (iters < 0) iters = arch.default_iters;

  auto [pl, rec] = pad_to_multiple(normalize_image(left), 32);
  Tensorf pr = pad_to_multiple(normalize_image(right), 32).first;

  auto [fl, fr] = extract_features(pl, pr, weights);
  CorrelationPyramid pyramid = build_correlation_pyramid(fl, fr, arch.corr_levels);
  auto [context, state] = extract_context(pl, weights);

  Tensorf disp(1, 1, fl.shape().h, fl.shape().w);
  for (int it = 0; it < iters; ++it) {
    Tensorf corr = lookup(pyramid, disp, arch.corr_radius);
    GruOutput step = gru_update(state, context, corr, disp, weights);
    state = std::move(step.state);
    for (Index i = 0; i < disp.size(); ++i) disp.data()[i] += step.delta.data()[i];
  }

  Tensorf full = convex_upsample(disp, upsample_mask_logits(state, weights));
  Tensorf cropped = crop_spatial(full, rec.orig_h, rec.orig_w);

  DisparityMap out(int(rec.orig_w), int(rec.orig_h));
  for (Index y = 0; y < rec.orig_h; ++y)
    for (Index x = 0; x < rec.orig_w; ++x)
      out.at(int(y), int(x)) = cropped(0, 0, y, x);
  return out;
}

}  // namespace stereo
