#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ditvr {

template <typename Scalar>
using PlaneT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.derived().array().isFinite().all();
}

// Dense n-d array, row-major. Values must be finite.
template <typename Scalar>
class TensorT {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TensorT() = default;
  TensorT(std::vector<std::size_t> shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    const auto count = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    if (count != static_cast<std::size_t>(data_.size()))
      throw std::invalid_argument("tensor: shape does not match data length");
    if (!all_finite(data_)) throw std::invalid_argument("tensor: non-finite value");
  }
  explicit TensorT(std::vector<std::size_t> shape)
      : TensorT(shape, Vector::Zero(static_cast<Eigen::Index>(
                           std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>())))) {}

  const std::vector<std::size_t>& shape() const { return shape_; }
  const Vector& data() const { return data_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

 private:
  std::vector<std::size_t> shape_;
  Vector data_;
};
using Tensor = TensorT<double>;

// A (channels x height x width) image, one row-major plane per channel.
template <typename Scalar>
class FrameT {
 public:
  using PlaneType = PlaneT<Scalar>;

  FrameT() = default;
  FrameT(int channels, int height, int width, Scalar fill = Scalar(0)) {
    check_dims(channels, height, width);
    planes_.assign(static_cast<std::size_t>(channels), PlaneType::Constant(height, width, fill));
  }
  explicit FrameT(std::vector<PlaneType> planes) : planes_(std::move(planes)) {
    if (planes_.empty()) throw std::invalid_argument("frame: no channels");
    check_dims(channels(), height(), width());
    for (const auto& p : planes_) {
      if (p.rows() != height() || p.cols() != width()) throw std::invalid_argument("frame: ragged planes");
      if (!all_finite(p)) throw std::invalid_argument("frame: non-finite pixel");
    }
  }

  int channels() const { return static_cast<int>(planes_.size()); }
  int height() const { return planes_.empty() ? 0 : static_cast<int>(planes_.front().rows()); }
  int width() const { return planes_.empty() ? 0 : static_cast<int>(planes_.front().cols()); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(channels()) * height() * width(); }

  PlaneType& plane(int c) { return planes_.at(static_cast<std::size_t>(c)); }
  const PlaneType& plane(int c) const { return planes_.at(static_cast<std::size_t>(c)); }
  const std::vector<PlaneType>& planes() const { return planes_; }

  Scalar& operator()(int c, int y, int x) { return planes_[static_cast<std::size_t>(c)](y, x); }
  Scalar operator()(int c, int y, int x) const { return planes_[static_cast<std::size_t>(c)](y, x); }

  bool same_shape(const FrameT& other) const {
    return channels() == other.channels() && height() == other.height() && width() == other.width();
  }

  // Flattened channel-major copy.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flatten() const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(static_cast<Eigen::Index>(pixel_count()));
    Eigen::Index off = 0;
    const Eigen::Index n = Eigen::Index(height()) * width();
    for (const auto& p : planes_) {
      out.segment(off, n) = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(p.data(), n);
      off += n;
    }
    return out;
  }

  bool operator==(const FrameT& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t c = 0; c < planes_.size(); ++c)
      if (planes_[c] != other.planes_[c]) return false;
    return true;
  }

 private:
  static void check_dims(int channels, int height, int width) {
    if (channels < 1 || height < 1 || width < 1)
      throw std::invalid_argument("frame: dimensions must be >= 1, got " + std::to_string(channels) + "x" +
                                  std::to_string(height) + "x" + std::to_string(width));
  }

  std::vector<PlaneType> planes_;
};

using Frame = FrameT<double>;
using Video = std::vector<Frame>;

template <typename Scalar, typename Op>
FrameT<Scalar> map_planes(const FrameT<Scalar>& frame, Op op) {
  std::vector<PlaneT<Scalar>> out;
  out.reserve(static_cast<std::size_t>(frame.channels()));
  for (const auto& p : frame.planes()) out.push_back(op(p));
  return FrameT<Scalar>(std::move(out));
}

template <typename Scalar, typename Op>
FrameT<Scalar> zip_planes(const FrameT<Scalar>& a, const FrameT<Scalar>& b, Op op) {
  if (!a.same_shape(b)) throw std::invalid_argument("frame shape mismatch");
  std::vector<PlaneT<Scalar>> out;
  out.reserve(static_cast<std::size_t>(a.channels()));
  for (int c = 0; c < a.channels(); ++c) out.push_back(op(a.plane(c), b.plane(c)));
  return FrameT<Scalar>(std::move(out));
}

template <typename Scalar>
FrameT<Scalar> operator+(const FrameT<Scalar>& a, const FrameT<Scalar>& b) {
  return zip_planes(a, b, [](const auto& x, const auto& y) -> PlaneT<Scalar> { return x + y; });
}
template <typename Scalar>
FrameT<Scalar> operator-(const FrameT<Scalar>& a, const FrameT<Scalar>& b) {
  return zip_planes(a, b, [](const auto& x, const auto& y) -> PlaneT<Scalar> { return x - y; });
}
template <typename Scalar>
FrameT<Scalar> operator*(Scalar s, const FrameT<Scalar>& a) {
  return map_planes(a, [s](const auto& x) -> PlaneT<Scalar> { return s * x; });
}

template <typename Scalar>
FrameT<Scalar> clamp01(const FrameT<Scalar>& frame) {
  return map_planes(frame, [](const auto& p) -> PlaneT<Scalar> {
    return p.array().max(Scalar(0)).min(Scalar(1)).matrix();
  });
}

template <typename Scalar>
Scalar max_abs_diff(const FrameT<Scalar>& a, const FrameT<Scalar>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("frame shape mismatch");
  Scalar m = 0;
  for (int c = 0; c < a.channels(); ++c) m = std::max(m, (a.plane(c) - b.plane(c)).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace ditvr
