#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ditvr/flow_field.hpp"
#include "ditvr/rng.hpp"
#include "ditvr/tensor.hpp"

namespace ditvr {

// Bilinear sample at (x, y) with coordinates clamped to the plane.
template <typename Derived>
typename Derived::Scalar sample_bilinear(const Eigen::MatrixBase<Derived>& plane, double x, double y) {
  using Scalar = typename Derived::Scalar;
  const auto h = plane.rows();
  const auto w = plane.cols();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const auto x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
  const auto y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
  const Scalar fx = static_cast<Scalar>(x - static_cast<double>(x0));
  const Scalar fy = static_cast<Scalar>(y - static_cast<double>(y0));
  const Scalar top = (Scalar(1) - fx) * plane(y0, x0) + fx * plane(y0, x1);
  const Scalar bottom = (Scalar(1) - fx) * plane(y1, x0) + fx * plane(y1, x1);
  return (Scalar(1) - fy) * top + fy * bottom;
}

inline bool inside(double x, double y, int height, int width) {
  return x >= 0.0 && y >= 0.0 && x <= static_cast<double>(width - 1) && y <= static_cast<double>(height - 1);
}

template <typename Scalar>
struct WarpResult {
  FrameT<Scalar> frame;
  Mask valid;  // false where the tap fell outside the source frame
};

// output(x, y) = source sampled at (x + du, y + dv). Out-of-frame taps are
// edge-clamped and flagged in the mask.
template <typename Scalar>
WarpResult<Scalar> bilinear_warp(const FrameT<Scalar>& source, const FlowField& flow) {
  if (!flow.same_size(source.height(), source.width()))
    throw std::invalid_argument("bilinear_warp: flow and frame dimensions differ");
  const int h = source.height();
  const int w = source.width();
  WarpResult<Scalar> out{FrameT<Scalar>(source.channels(), h, w), Mask::Constant(h, w, true)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + flow.du(y, x);
      const double sy = y + flow.dv(y, x);
      out.valid(y, x) = inside(sx, sy, h, w);
      for (int c = 0; c < source.channels(); ++c) out.frame(c, y, x) = sample_bilinear(source.plane(c), sx, sy);
    }
  }
  return out;
}

// Mean over non-overlapping s x s blocks of a single plane.
template <typename Derived>
PlaneT<typename Derived::Scalar> block_mean(const Eigen::MatrixBase<Derived>& plane, int s) {
  using Scalar = typename Derived::Scalar;
  if (s < 1) throw std::invalid_argument("block_mean: factor must be >= 1");
  if (plane.rows() % s != 0 || plane.cols() % s != 0)
    throw std::invalid_argument("block_mean: dimensions not divisible by factor " + std::to_string(s));
  const Eigen::Index oh = plane.rows() / s;
  const Eigen::Index ow = plane.cols() / s;
  PlaneT<Scalar> out(oh, ow);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(s * s);
  for (Eigen::Index i = 0; i < oh; ++i)
    for (Eigen::Index j = 0; j < ow; ++j) out(i, j) = plane.block(i * s, j * s, s, s).sum() * inv;
  return out;
}

// Nearest-neighbour replication of every pixel into an s x s block.
template <typename Derived>
PlaneT<typename Derived::Scalar> replicate(const Eigen::MatrixBase<Derived>& plane, int s) {
  using Scalar = typename Derived::Scalar;
  if (s < 1) throw std::invalid_argument("replicate: factor must be >= 1");
  PlaneT<Scalar> out(plane.rows() * s, plane.cols() * s);
  for (Eigen::Index i = 0; i < plane.rows(); ++i)
    for (Eigen::Index j = 0; j < plane.cols(); ++j) out.block(i * s, j * s, s, s).setConstant(plane(i, j));
  return out;
}

template <typename Scalar>
FrameT<Scalar> avg_pool_downsample(const FrameT<Scalar>& frame, int s) {
  return map_planes(frame, [s](const auto& p) { return block_mean(p, s); });
}

// Right inverse of avg_pool_downsample: avg_pool(pseudo_inverse_upsample(y, s), s) == y.
template <typename Scalar>
FrameT<Scalar> pseudo_inverse_upsample(const FrameT<Scalar>& frame, int s) {
  return map_planes(frame, [s](const auto& p) { return replicate(p, s); });
}

// Additive white Gaussian noise; sigma is on the [0, 1] intensity scale.
// The result is not clamped.
template <typename Scalar>
FrameT<Scalar> add_gaussian_noise(const FrameT<Scalar>& frame, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return frame;
  Rng rng(seed);
  return map_planes(frame, [&](const auto& p) {
    PlaneT<Scalar> out = p;
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += static_cast<Scalar>(sigma * rng.normal());
    return out;
  });
}

// A frame of i.i.d. standard normal values.
template <typename Scalar = double>
FrameT<Scalar> gaussian_frame(int channels, int height, int width, std::uint64_t seed) {
  FrameT<Scalar> out(channels, height, width);
  Rng rng(seed);
  for (int c = 0; c < channels; ++c)
    for (Eigen::Index i = 0; i < out.plane(c).size(); ++i) out.plane(c).data()[i] = static_cast<Scalar>(rng.normal());
  return out;
}

// BT.601 luma for 3-channel frames; 1-channel frames pass through.
template <typename Scalar>
PlaneT<Scalar> luma(const FrameT<Scalar>& frame) {
  if (frame.channels() == 1) return frame.plane(0);
  if (frame.channels() != 3) throw std::invalid_argument("luma: expected 1 or 3 channels");
  return Scalar(0.299) * frame.plane(0) + Scalar(0.587) * frame.plane(1) + Scalar(0.114) * frame.plane(2);
}

}  // namespace ditvr
