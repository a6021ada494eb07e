#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stereo/error.hpp"

namespace stereo {

using Index = std::int64_t;

// (batch, channel, height, width)
struct Shape4 {
  Index n = 0, c = 0, h = 0, w = 0;

  Index size() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
};

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " +
         std::to_string(s.h) + ", " + std::to_string(s.w) + ")";
}

// Dense rank-4 array in contiguous row-major (n, c, h, w) order. Immutable by
// convention once a kernel has produced it; kernels are pure functions and
// never share buffers between inputs and outputs.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<MatrixType>;
  using ConstMatrixMap = Eigen::Map<const MatrixType>;
  using VectorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using ConstVectorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;
  explicit Tensor(Shape4 shape) : shape_(shape), data_(checked_size(shape)) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape4{n, c, h, w}) {}

  static Tensor full(Shape4 shape, Scalar value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape4& shape() const { return shape_; }
  Index size() const { return static_cast<Index>(data_.size()); }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[offset(n, c, h, w)];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[offset(n, c, h, w)];
  }

  // One batch item as a (c) x (h*w) matrix; rows are channel planes.
  MatrixMap channels(Index n) {
    return MatrixMap(data() + n * shape_.c * plane_size(), shape_.c, plane_size());
  }
  ConstMatrixMap channels(Index n) const {
    return ConstMatrixMap(data() + n * shape_.c * plane_size(), shape_.c,
                          plane_size());
  }

  // One channel plane as an (h) x (w) matrix.
  MatrixMap plane(Index n, Index c) {
    return MatrixMap(data() + (n * shape_.c + c) * plane_size(), shape_.h,
                     shape_.w);
  }
  ConstMatrixMap plane(Index n, Index c) const {
    return ConstMatrixMap(data() + (n * shape_.c + c) * plane_size(), shape_.h,
                          shape_.w);
  }

  VectorMap flat() { return VectorMap(data(), size()); }
  ConstVectorMap flat() const { return ConstVectorMap(data(), size()); }

  std::span<Scalar> row_span(Index n, Index c, Index h) {
    return {data() + offset(n, c, h, 0), static_cast<size_t>(shape_.w)};
  }
  std::span<const Scalar> row_span(Index n, Index c, Index h) const {
    return {data() + offset(n, c, h, 0), static_cast<size_t>(shape_.w)};
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  static Index checked_size(Shape4 s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw std::invalid_argument("tensor shape must be nonnegative " +
                                  to_string(s));
    return s.size();
  }

  Index plane_size() const { return shape_.h * shape_.w; }

  Index offset(Index n, Index c, Index h, Index w) const {
    assert(n >= 0 && n < shape_.n && c >= 0 && c < shape_.c);
    assert(h >= 0 && h < shape_.h && w >= 0 && w < shape_.w);
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_;
  std::vector<Scalar> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace stereo
