#pragma once

#include "ditvr/tensor.hpp"

namespace ditvr {

// Per-pixel displacement (du horizontal, dv vertical, in pixels) mapping
// positions of one frame to another, with a validity mask.
struct FlowField {
  Plane du;
  Plane dv;
  Mask valid;

  FlowField() = default;
  FlowField(int height, int width, double u = 0.0, double v = 0.0)
      : du(Plane::Constant(height, width, u)),
        dv(Plane::Constant(height, width, v)),
        valid(Mask::Constant(height, width, true)) {
    if (height < 1 || width < 1) throw std::invalid_argument("flow: dimensions must be >= 1");
  }
  FlowField(Plane u, Plane v) : du(std::move(u)), dv(std::move(v)) {
    if (du.rows() != dv.rows() || du.cols() != dv.cols()) throw std::invalid_argument("flow: du/dv size mismatch");
    if (!all_finite(du) || !all_finite(dv)) throw std::invalid_argument("flow: non-finite displacement");
    valid = Mask::Constant(du.rows(), du.cols(), true);
  }

  int height() const { return static_cast<int>(du.rows()); }
  int width() const { return static_cast<int>(du.cols()); }
  bool same_size(int h, int w) const { return height() == h && width() == w; }
};

}  // namespace ditvr
