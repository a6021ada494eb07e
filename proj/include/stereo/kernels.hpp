#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <span>

#include "stereo/tensor.hpp"

// Dense numeric kernels on rank-4 tensors. All functions are pure; outputs
// are freshly allocated. Accumulation stays in the scalar type, with the
// summation order fixed by the loop (or GEMM tap) structure, so repeated runs
// are bit-identical.

namespace stereo {

enum class Activation { kRelu, kSigmoid, kTanh };

namespace detail {

template <typename T>
T apply_activation(T v, Activation fn) {
  switch (fn) {
    case Activation::kRelu:
      return v > T(0) ? v : T(0);
    case Activation::kSigmoid:
      return T(1) / (T(1) + std::exp(-v));
    case Activation::kTanh:
      return std::tanh(v);
  }
  return v;
}

}  // namespace detail

template <typename T>
Tensor<T> elementwise(const Tensor<T>& input, Activation fn) {
  Tensor<T> out(input.shape());
  const T* src = input.data();
  T* dst = out.data();
  for (Index i = 0; i < input.size(); ++i) dst[i] = detail::apply_activation(src[i], fn);
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& t) { return elementwise(t, Activation::kRelu); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t) { return elementwise(t, Activation::kSigmoid); }
template <typename T>
Tensor<T> tanh(const Tensor<T>& t) { return elementwise(t, Activation::kTanh); }

// Direct 2D convolution in the cross-correlation convention (no kernel flip)
// with zero padding. kernel is (co, ci, kh, kw); bias has co entries or is
// empty. Internally one GEMM per kernel tap: out += W[., ., ky, kx] * X_tap.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::span<const T> bias, int stride = 1, int pad = 0) {
  const Shape4& is = input.shape();
  const Shape4& ks = kernel.shape();
  if (is.c != ks.c)
    throw std::invalid_argument("conv2d: channel mismatch, input " +
                                to_string(is) + " vs kernel " + to_string(ks));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  if (!bias.empty() && static_cast<Index>(bias.size()) != ks.n)
    throw std::invalid_argument("conv2d: bias size mismatch");

  const Index oh = (is.h + 2 * pad - ks.h) / stride + 1;
  const Index ow = (is.w + 2 * pad - ks.w) / stride + 1;
  if (is.h + 2 * pad < ks.h || is.w + 2 * pad < ks.w || oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: non-positive output dimension for input " +
                                to_string(is) + " kernel " + to_string(ks));

  Tensor<T> out(is.n, ks.n, oh, ow);
  const Index opix = oh * ow;

  using Matrix = typename Tensor<T>::MatrixType;
  Matrix tap_weights(ks.n, ks.c);
  Matrix tap_input(ks.c, opix);

  for (Index n = 0; n < is.n; ++n) {
    auto dst = out.channels(n);
    if (bias.empty()) {
      dst.setZero();
    } else {
      for (Index o = 0; o < ks.n; ++o) dst.row(o).setConstant(bias[o]);
    }

    // Fast path: pointwise convolution is a single GEMM on the raw maps.
    if (ks.h == 1 && ks.w == 1 && stride == 1 && pad == 0) {
      tap_weights.resize(ks.n, ks.c);
      for (Index o = 0; o < ks.n; ++o)
        for (Index c = 0; c < ks.c; ++c) tap_weights(o, c) = kernel(o, c, 0, 0);
      dst.noalias() += tap_weights * input.channels(n);
      continue;
    }

    for (Index ky = 0; ky < ks.h; ++ky) {
      for (Index kx = 0; kx < ks.w; ++kx) {
        for (Index o = 0; o < ks.n; ++o)
          for (Index c = 0; c < ks.c; ++c) tap_weights(o, c) = kernel(o, c, ky, kx);

        for (Index c = 0; c < ks.c; ++c) {
          T* row = tap_input.data() + c * opix;  // row-major rows are contiguous
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride - pad + ky;
            T* seg = row + oy * ow;
            if (iy < 0 || iy >= is.h) {
              std::fill(seg, seg + ow, T(0));
              continue;
            }
            const T* src = input.data() + ((n * is.c + c) * is.h + iy) * is.w;
            if (stride == 1) {
              const Index ix0 = -pad + kx;
              const Index lo = std::max<Index>(0, -ix0);
              const Index hi = std::min<Index>(ow, is.w - ix0);
              std::fill(seg, seg + std::min<Index>(lo, ow), T(0));
              if (hi > lo) std::copy(src + ix0 + lo, src + ix0 + hi, seg + lo);
              if (hi < ow) std::fill(seg + std::max<Index>(hi, Index(0)), seg + ow, T(0));
            } else {
              for (Index ox = 0; ox < ow; ++ox) {
                const Index ix = ox * stride - pad + kx;
                seg[ox] = (ix >= 0 && ix < is.w) ? src[ix] : T(0);
              }
            }
          }
        }
        dst.noalias() += tap_weights * tap_input;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const std::vector<T>& bias, int stride = 1, int pad = 0) {
  return conv2d(input, kernel, std::span<const T>(bias), stride, pad);
}

// Mean-pool the last dimension by `factor` with ceil semantics: the final bin
// averages however many elements remain.
template <typename T>
Tensor<T> avg_pool_last(const Tensor<T>& input, int factor) {
  if (factor < 1) throw std::invalid_argument("avg_pool_last: factor must be >= 1");
  const Shape4& s = input.shape();
  const Index ow = (s.w + factor - 1) / factor;
  Tensor<T> out(s.n, s.c, s.h, ow);
  const Index rows = s.n * s.c * s.h;
  for (Index r = 0; r < rows; ++r) {
    const T* src = input.data() + r * s.w;
    T* dst = out.data() + r * ow;
    for (Index b = 0; b < ow; ++b) {
      const Index begin = b * factor;
      const Index end = std::min<Index>(s.w, begin + factor);
      T sum = T(0);
      for (Index i = begin; i < end; ++i) sum += src[i];
      dst[b] = sum / static_cast<T>(end - begin);
    }
  }
  return out;
}

// Linear interpolation of the two bins around x. Bins live at integer
// coordinates; anything beyond them reads as zero, so coordinates at or
// outside [-1, len] contribute nothing.
template <typename T>
T bilinear_sample_1d(std::span<const T> row, double x) {
  const Index len = static_cast<Index>(row.size());
  if (!(x > -1.0) || !(x < static_cast<double>(len))) return T(0);
  const double fl = std::floor(x);
  const Index i0 = static_cast<Index>(fl);
  const double f = x - fl;
  const double v0 = (i0 >= 0 && i0 < len) ? double(row[i0]) : 0.0;
  const double v1 = (i0 + 1 >= 0 && i0 + 1 < len) ? double(row[i0 + 1]) : 0.0;
  return static_cast<T>((1.0 - f) * v0 + f * v1);
}

// Softmax over the channel axis at every (n, h, w) position, stabilized by
// subtracting the per-position max.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
  const Shape4& s = input.shape();
  if (s.c < 1) throw std::invalid_argument("softmax_channels: need c >= 1");
  Tensor<T> out(s);
  const Index plane = s.h * s.w;
  for (Index n = 0; n < s.n; ++n) {
    const T* src = input.data() + n * s.c * plane;
    T* dst = out.data() + n * s.c * plane;
    for (Index p = 0; p < plane; ++p) {
      T m = src[p];
      for (Index c = 1; c < s.c; ++c) m = std::max(m, src[c * plane + p]);
      T sum = T(0);
      for (Index c = 0; c < s.c; ++c) {
        const T e = std::exp(src[c * plane + p] - m);
        dst[c * plane + p] = e;
        sum += e;
      }
      for (Index c = 0; c < s.c; ++c) dst[c * plane + p] /= sum;
    }
  }
  return out;
}

// 2x2 mean pooling over both spatial dims, ceil semantics at the borders.
template <typename T>
Tensor<T> downsample2x_mean(const Tensor<T>& input) {
  const Shape4& s = input.shape();
  const Index oh = (s.h + 1) / 2, ow = (s.w + 1) / 2;
  Tensor<T> out(s.n, s.c, oh, ow);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < oh; ++y) {
        const Index y0 = 2 * y, y1 = std::min<Index>(s.h - 1, 2 * y + 1);
        for (Index x = 0; x < ow; ++x) {
          const Index x0 = 2 * x, x1 = std::min<Index>(s.w - 1, 2 * x + 1);
          const T sum = input(n, c, y0, x0) + input(n, c, y0, x1) +
                        input(n, c, y1, x0) + input(n, c, y1, x1);
          const int cnt = (1 + (x1 > x0)) * (1 + (y1 > y0));
          // the clamped duplicates double-count; divide by the true window
          out(n, c, y, x) = (cnt == 4) ? sum / T(4)
                          : (cnt == 2) ? (input(n, c, y0, x0) +
                                          input(n, c, y1, x1)) / T(2)
                                       : input(n, c, y0, x0);
        }
      }
    }
  }
  return out;
}

// Bilinear 2x upsampling with half-pixel sample centers and edge clamping.
template <typename T>
Tensor<T> upsample2x_bilinear(const Tensor<T>& input) {
  const Shape4& s = input.shape();
  const Index oh = s.h * 2, ow = s.w * 2;
  Tensor<T> out(s.n, s.c, oh, ow);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      auto src = input.plane(n, c);
      for (Index y = 0; y < oh; ++y) {
        const double sy = std::clamp(y * 0.5 - 0.25, 0.0, double(s.h - 1));
        const Index y0 = static_cast<Index>(sy);
        const Index y1 = std::min<Index>(y0 + 1, s.h - 1);
        const T fy = static_cast<T>(sy - double(y0));
        for (Index x = 0; x < ow; ++x) {
          const double sx = std::clamp(x * 0.5 - 0.25, 0.0, double(s.w - 1));
          const Index x0 = static_cast<Index>(sx);
          const Index x1 = std::min<Index>(x0 + 1, s.w - 1);
          const T fx = static_cast<T>(sx - double(x0));
          const T top = (T(1) - fx) * src(y0, x0) + fx * src(y0, x1);
          const T bot = (T(1) - fx) * src(y1, x0) + fx * src(y1, x1);
          out(n, c, y, x) = (T(1) - fy) * top + fy * bot;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
  Index total_c = 0;
  const Tensor<T>* first = *parts.begin();
  for (const Tensor<T>* p : parts) {
    const Shape4& s = p->shape();
    if (s.n != first->shape().n || s.h != first->shape().h || s.w != first->shape().w)
      throw std::invalid_argument("concat_channels: spatial/batch mismatch");
    total_c += s.c;
  }
  const Shape4& f = first->shape();
  Tensor<T> out(f.n, total_c, f.h, f.w);
  const Index plane = f.h * f.w;
  for (Index n = 0; n < f.n; ++n) {
    Index co = 0;
    for (const Tensor<T>* p : parts) {
      const Index pc = p->shape().c;
      std::copy(p->data() + n * pc * plane, p->data() + (n + 1) * pc * plane,
                out.data() + (n * total_c + co) * plane);
      co += pc;
    }
  }
  return out;
}

// Replicate the last row/column outward.
template <typename T>
Tensor<T> pad_edge(const Tensor<T>& input, Index bottom, Index right) {
  const Shape4& s = input.shape();
  Tensor<T> out(s.n, s.c, s.h + bottom, s.w + right);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < s.h + bottom; ++y) {
        const Index sy = std::min<Index>(y, s.h - 1);
        const T* src = input.data() + ((n * s.c + c) * s.h + sy) * s.w;
        T* dst = out.data() + ((n * s.c + c) * (s.h + bottom) + y) * (s.w + right);
        std::copy(src, src + s.w, dst);
        std::fill(dst + s.w, dst + s.w + right, src[s.w - 1]);
      }
  return out;
}

// Top-left crop to (h, w).
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& input, Index h, Index w) {
  const Shape4& s = input.shape();
  if (h > s.h || w > s.w || h < 1 || w < 1)
    throw std::invalid_argument("crop_spatial: bad target size");
  Tensor<T> out(s.n, s.c, h, w);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < h; ++y) {
        const T* src = input.data() + ((n * s.c + c) * s.h + y) * s.w;
        std::copy(src, src + w, out.data() + ((n * s.c + c) * h + y) * w);
      }
  return out;
}

}  // namespace stereo
