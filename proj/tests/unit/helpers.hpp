#pragma once

#include <cstdint>

#include "ditvr/flow_field.hpp"
#include "ditvr/rng.hpp"
#include "ditvr/tensor.hpp"

namespace testutil {

inline ditvr::Frame random_frame(int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  ditvr::Rng rng(seed);
  ditvr::Frame f(c, h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f(ch, y, x) = rng.uniform(lo, hi);
  return f;
}

inline ditvr::FlowField random_flow(int h, int w, double amp, std::uint64_t seed) {
  ditvr::Rng rng(seed);
  ditvr::Plane u(h, w), v(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      u(y, x) = rng.uniform(-amp, amp);
      v(y, x) = rng.uniform(-amp, amp);
    }
  return {u, v};
}

}  // namespace testutil
