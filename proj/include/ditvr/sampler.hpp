#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ditvr/dit.hpp"
#include "ditvr/flow.hpp"
#include "ditvr/schedule.hpp"
#include "ditvr/tensor.hpp"
#include "ditvr/wavelet.hpp"

namespace ditvr {

enum class TaskKind { Denoise, SuperResolution };

// Linear degradation A with a right inverse A† (A A† = I).
//   denoise: A = A† = identity.
//   sr<s>:   A = s x s average pooling, A† = nearest replication.
class DegradationOperator {
 public:
  static DegradationOperator identity();
  static DegradationOperator super_resolution(int scale);

  TaskKind kind() const { return kind_; }
  int scale() const { return scale_; }
  std::string name() const;

  Frame apply(const Frame& x) const;
  Frame apply_pinv(const Frame& y) const;

  // The operator acting on the LL band of a one-level Haar split, such that
  // A(x) = y  <=>  low_band().apply(LL(x)) = observe_low(y).
  //   denoise: identity on LL, y_L = LL(y).
  //   sr<s>:   pooling by s/2 on LL (s must be even), y_L = low_band().apply(LL(A† y)) = 2 y.
  DegradationOperator low_band() const;
  Frame observe_low(const Frame& y) const;

 private:
  DegradationOperator(TaskKind kind, int scale) : kind_(kind), scale_(scale) {}
  TaskKind kind_;
  int scale_;
};

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
Frame forward_noising(const Frame& x0, int t, const Frame& eps, const DiffusionSchedule& schedule);

// (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t).
Frame predict_x0(const Frame& x_t, const Frame& eps_hat, int t, const DiffusionSchedule& schedule);

// Deterministic (eta = 0) DDIM update towards t_prev (-1 = clean end point).
Frame ddim_step(const Frame& x_t, const Frame& eps_hat, int t, int t_prev, const DiffusionSchedule& schedule);
Frame ddim_step_from_x0(const Frame& x0_hat, const Frame& eps_hat, int t_prev, const DiffusionSchedule& schedule);

// LL <- LL - A_L†(A_L LL - y_L); detail bands untouched.
WaveletBands correct_low_band(const WaveletBands& bands, const Frame& y, const DegradationOperator& op);
Frame low_freq_data_fidelity(const Frame& x0_hat, const Frame& y, const DegradationOperator& op);

// Low-band correction field A_L†(A_L LL - y_L) of one frame.
Frame low_band_residual(const WaveletBands& bands, const Frame& y, const DegradationOperator& op);

// For each frame f the low-band correction is the mean of the residual
// fields of frames f, f-1, ..., f-N+1 sampled at the trajectory positions of
// f's LL pixels (sentinel members skipped). ll_tracks[f] are backward chains
// on the LL grid. N = 1 is exactly low_freq_data_fidelity per frame.
std::vector<Frame> flow_guided_residual_alignment(const std::vector<Frame>& x0_hats, const std::vector<Frame>& ys,
                                                  const std::vector<TrajectorySet>& ll_tracks,
                                                  const DegradationOperator& op, int window);

// Observer hooks, called inside the sampling loop.
struct SamplerProbe {
  // After the low-band correction of one frame at one diffusion step.
  std::function<void(int step, int frame, const WaveletBands& before, const WaveletBands& after, const Frame& y_low,
                     const DegradationOperator& low_op)>
      on_low_band_correction;
  // Final x0 estimate of every frame at one step.
  std::function<void(int step, const std::vector<Frame>& x0)> on_step;
};

struct FlowPair {
  std::vector<FlowField> fwd;  // fwd[i]: frame i -> i + 1
  std::vector<FlowField> bwd;  // bwd[i]: frame i + 1 -> i
};

struct FlowEstimateParams {
  int block = 8;
  int radius = 4;
};

// Bidirectional block-matching flow between consecutive frames.
FlowPair estimate_video_flow(const Video& video, FlowEstimateParams params = {});

struct RestoreOptions {
  bool flow_guided_sampler = true;  // residual alignment along trajectories
  int fs_window = 2;                // frames per alignment window, including the current one
  double warp_blend = 0.0;          // > 0: blend x0 with the flow-warped previous x0
  bool temporal_context = true;     // feed flows and trajectories to the denoiser
  int round_trip_tol = 1;
  std::uint64_t noise_seed = 0;
  std::optional<FlowPair> flows;  // pixel-resolution flows; estimated on A† y when absent
  FlowEstimateParams flow_params;
  SamplerProbe* probe = nullptr;
};

struct RestoreResult {
  Video frames;
  FlowPair flows;
};

RestoreResult restore_video(const Video& lq, const DegradationOperator& op, const DiTModel& model,
                            const DiffusionSchedule& schedule, const std::vector<int>& timesteps,
                            const RestoreOptions& options = {});

}  // namespace ditvr
