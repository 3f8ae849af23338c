#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "ditvr/flow_field.hpp"
#include "ditvr/tensor.hpp"

namespace ditvr {

// Exhaustive SAD block matching from frame_a to frame_b. Each block of
// frame_a gets the integer displacement in [-radius, radius]^2 minimizing the
// sum of absolute differences against frame_b (edge-clamped taps), summed
// over channels. Ties: smallest squared magnitude, then smallest (du, dv).
FlowField estimate_flow_block_matching(const Frame& frame_a, const Frame& frame_b, int block, int radius);

// Block-average displacements and divide them by the factor. Valid where the
// whole source block was valid.
FlowField downsample_flow(const FlowField& flow, int factor);

// Rounding used for trajectory chaining: floor(x + 0.5), halves round up.
inline int round_coord(double v) { return static_cast<int>(std::floor(v + 0.5)); }

struct MappedPoint {
  double u = 0.0;  // exact (bilinear) destination
  double v = 0.0;
  int ui = 0;      // rounded destination
  int vi = 0;
  bool in_bounds = false;  // rounded destination lies inside the frame
};

// (u, v) + flow(u, v) with the flow sampled bilinearly.
MappedPoint forward_map(double u, double v, const FlowField& flow);

struct TrajectoryPoint {
  int frame = -1;
  int u = -1;
  int v = -1;

  bool is_sentinel() const { return frame < 0; }
  static constexpr TrajectoryPoint sentinel() { return {}; }
  bool operator==(const TrajectoryPoint&) const = default;
};

struct PixelCoord {
  int u = 0;  // column
  int v = 0;  // row
  bool operator==(const PixelCoord&) const = default;
};

// chains[k][i] is start k's position at step i (step 0 is the start itself).
struct TrajectorySet {
  std::vector<PixelCoord> starts;
  std::vector<std::vector<TrajectoryPoint>> chains;
  int height = 0;
  int width = 0;

  std::size_t steps() const { return chains.empty() ? 0 : chains.front().size(); }
};

// Chains every start through the flow sequence. fwd[i] maps step i to step
// i + 1 and bwd[i] maps step i + 1 back to step i. A step is accepted iff the
// backward-mapped position lies within the round_trip_tol Chebyshev
// neighbourhood of the current position; otherwise (or when the chain leaves
// the frame) the chain turns into the sentinel for all remaining steps.
// Frame labels are start_frame + frame_step * i.
TrajectorySet build_trajectories(const std::vector<FlowField>& fwd, const std::vector<FlowField>& bwd,
                                 const std::vector<PixelCoord>& starts, int round_trip_tol = 1,
                                 int start_frame = 0, int frame_step = 1);

// Every pixel of a height x width grid in raster order.
std::vector<PixelCoord> all_pixels(int height, int width);

// For every frame f, the backward chains of all its pixels through frames
// f-1, ..., f-window (fwd[i]: frame i -> i+1, bwd[i]: frame i+1 -> i).
// Frame 0 gets a set with only the starting step.
std::vector<TrajectorySet> backward_tracks(const std::vector<FlowField>& fwd, const std::vector<FlowField>& bwd,
                                           int window, int round_trip_tol = 1);

// True where the forward-backward round trip returns within tol (infinity
// norm); bwd is sampled bilinearly at the forward destination.
Mask occlusion_mask(const FlowField& fwd, const FlowField& bwd,
                    double tol = std::numeric_limits<double>::infinity());

// Middlebury .flo: "PIEH", int32 width, int32 height, float32 (du, dv)
// interleaved row-major, little-endian.
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

}  // namespace ditvr
