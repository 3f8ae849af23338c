#pragma once

#include "ditvr/tensor.hpp"

namespace ditvr {

// One level of the orthonormal Haar transform. For the 2x2 cell
//   a b
//   c d
// LL = (a+b+c+d)/2, HL = (a-b+c-d)/2, LH = (a+b-c-d)/2, HH = (a-b-c+d)/2,
// so a constant frame c has LL = 2c and zero detail bands. Odd dimensions
// are edge-padded by one row/column and cropped again on synthesis.
template <typename Scalar>
struct WaveletBandsT {
  FrameT<Scalar> ll, hl, lh, hh;
  int height = 0;  // original (unpadded) size
  int width = 0;
};
using WaveletBands = WaveletBandsT<double>;

template <typename Scalar>
WaveletBandsT<Scalar> dwt_haar(const FrameT<Scalar>& frame) {
  const int h = frame.height(), w = frame.width();
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  WaveletBandsT<Scalar> bands{FrameT<Scalar>(frame.channels(), oh, ow), FrameT<Scalar>(frame.channels(), oh, ow),
                              FrameT<Scalar>(frame.channels(), oh, ow), FrameT<Scalar>(frame.channels(), oh, ow), h,
                              w};
  const Scalar half = Scalar(0.5);
  for (int ch = 0; ch < frame.channels(); ++ch) {
    const auto& p = frame.plane(ch);
    for (int i = 0; i < oh; ++i) {
      const int y0 = 2 * i, y1 = std::min(2 * i + 1, h - 1);
      for (int j = 0; j < ow; ++j) {
        const int x0 = 2 * j, x1 = std::min(2 * j + 1, w - 1);
        const Scalar a = p(y0, x0), b = p(y0, x1), c = p(y1, x0), d = p(y1, x1);
        bands.ll(ch, i, j) = half * ((a + b) + (c + d));
        bands.hl(ch, i, j) = half * ((a - b) + (c - d));
        bands.lh(ch, i, j) = half * ((a + b) - (c + d));
        bands.hh(ch, i, j) = half * ((a - b) - (c - d));
      }
    }
  }
  return bands;
}

template <typename Scalar>
FrameT<Scalar> idwt_haar(const WaveletBandsT<Scalar>& bands) {
  const int channels = bands.ll.channels();
  const int oh = bands.ll.height(), ow = bands.ll.width();
  if (!bands.hl.same_shape(bands.ll) || !bands.lh.same_shape(bands.ll) || !bands.hh.same_shape(bands.ll))
    throw std::invalid_argument("idwt_haar: sub-band shapes differ");
  const int h = bands.height > 0 ? bands.height : 2 * oh;
  const int w = bands.width > 0 ? bands.width : 2 * ow;
  if ((h + 1) / 2 != oh || (w + 1) / 2 != ow) throw std::invalid_argument("idwt_haar: size does not match bands");
  FrameT<Scalar> out(channels, h, w);
  const Scalar half = Scalar(0.5);
  for (int ch = 0; ch < channels; ++ch) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const Scalar ll = bands.ll(ch, i, j), hl = bands.hl(ch, i, j);
        const Scalar lh = bands.lh(ch, i, j), hh = bands.hh(ch, i, j);
        const int y0 = 2 * i, y1 = 2 * i + 1, x0 = 2 * j, x1 = 2 * j + 1;
        out(ch, y0, x0) = half * ((ll + hl) + (lh + hh));
        if (x1 < w) out(ch, y0, x1) = half * ((ll - hl) + (lh - hh));
        if (y1 < h) out(ch, y1, x0) = half * ((ll + hl) - (lh + hh));
        if (x1 < w && y1 < h) out(ch, y1, x1) = half * ((ll - hl) - (lh - hh));
      }
    }
  }
  return out;
}

template <typename Scalar>
Scalar squared_norm(const FrameT<Scalar>& f) {
  Scalar s = 0;
  for (const auto& p : f.planes()) s += p.squaredNorm();
  return s;
}

}  // namespace ditvr
