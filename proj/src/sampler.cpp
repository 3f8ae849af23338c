#include "ditvr/sampler.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ditvr/image_ops.hpp"

namespace ditvr {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::Linear ? "linear" : "cosine"; }

DiffusionSchedule::DiffusionSchedule(std::vector<double> alpha_bar, ScheduleKind kind)
    : alpha_bar_(std::move(alpha_bar)), kind_(kind) {
  if (alpha_bar_.empty()) throw std::invalid_argument("DiffusionSchedule: empty");
  for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] <= 1.0))
      throw std::invalid_argument("DiffusionSchedule: alpha_bar outside (0, 1]");
    if (t > 0 && !(alpha_bar_[t] < alpha_bar_[t - 1]))
      throw std::invalid_argument("DiffusionSchedule: alpha_bar not strictly decreasing");
  }
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t == -1) return 1.0;
  if (t < -1 || t >= steps()) throw std::out_of_range("DiffusionSchedule: timestep " + std::to_string(t));
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double DiffusionSchedule::alpha(int t) const { return alpha_bar(t) / alpha_bar(t - 1); }

DiffusionSchedule make_schedule(int steps, ScheduleKind kind) {
  if (steps < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  std::vector<double> ab(static_cast<std::size_t>(steps));
  double prod = 1.0;
  if (kind == ScheduleKind::Linear) {
    constexpr double beta_start = 1e-4, beta_end = 0.02;
    for (int t = 0; t < steps; ++t) {
      const double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (steps - 1);
      prod *= 1.0 - beta;
      ab[static_cast<std::size_t>(t)] = prod;
    }
  } else {
    constexpr double s = 0.008;
    auto g = [&](double x) {
      const double c = std::cos((x / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t < steps; ++t) {
      const double beta = std::min(1.0 - g(t + 1) / g(t), 0.999);
      prod *= 1.0 - beta;
      ab[static_cast<std::size_t>(t)] = prod;
    }
  }
  return DiffusionSchedule(std::move(ab), kind);
}

std::vector<int> uniform_timesteps(const DiffusionSchedule& schedule, int count) {
  if (count < 0) throw std::invalid_argument("uniform_timesteps: negative count");
  if (count > schedule.steps()) throw std::invalid_argument("uniform_timesteps: more steps than the schedule has");
  std::vector<int> out;
  if (count == 0) return out;
  const int stride = schedule.steps() / count;
  for (int i = count - 1; i >= 0; --i) out.push_back(i * stride);
  return out;
}

// --- degradation operators ------------------------------------------------

DegradationOperator DegradationOperator::identity() { return {TaskKind::Denoise, 1}; }

DegradationOperator DegradationOperator::super_resolution(int scale) {
  if (scale < 1) throw std::invalid_argument("super_resolution: scale must be >= 1");
  return {TaskKind::SuperResolution, scale};
}

std::string DegradationOperator::name() const {
  return kind_ == TaskKind::Denoise ? "denoise" : "sr" + std::to_string(scale_);
}

Frame DegradationOperator::apply(const Frame& x) const {
  return kind_ == TaskKind::Denoise || scale_ == 1 ? x : avg_pool_downsample(x, scale_);
}

Frame DegradationOperator::apply_pinv(const Frame& y) const {
  return kind_ == TaskKind::Denoise || scale_ == 1 ? y : pseudo_inverse_upsample(y, scale_);
}

DegradationOperator DegradationOperator::low_band() const {
  if (kind_ == TaskKind::Denoise || scale_ == 1) return identity();
  if (scale_ % 2 != 0)
    throw std::invalid_argument("low_band: super-resolution scale must be even to act on the LL band");
  return super_resolution(scale_ / 2);
}

Frame DegradationOperator::observe_low(const Frame& y) const {
  if (kind_ == TaskKind::Denoise || scale_ == 1) return dwt_haar(y).ll;
  return low_band().apply(dwt_haar(apply_pinv(y)).ll);
}

// --- diffusion updates ----------------------------------------------------

Frame forward_noising(const Frame& x0, int t, const Frame& eps, const DiffusionSchedule& schedule) {
  if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noising: eps shape differs from x0");
  const double ab = schedule.alpha_bar(t);
  return zip_planes(x0, eps, [&](const Plane& x, const Plane& e) -> Plane {
    return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * e;
  });
}

Frame predict_x0(const Frame& x_t, const Frame& eps_hat, int t, const DiffusionSchedule& schedule) {
  if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("predict_x0: shape mismatch");
  const double ab = schedule.alpha_bar(t);
  return zip_planes(x_t, eps_hat, [&](const Plane& x, const Plane& e) -> Plane {
    return (x - std::sqrt(1.0 - ab) * e) / std::sqrt(ab);
  });
}

Frame ddim_step_from_x0(const Frame& x0_hat, const Frame& eps_hat, int t_prev, const DiffusionSchedule& schedule) {
  const double ab = schedule.alpha_bar(t_prev);
  if (ab == 1.0) return x0_hat;
  return zip_planes(x0_hat, eps_hat, [&](const Plane& x, const Plane& e) -> Plane {
    return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * e;
  });
}

Frame ddim_step(const Frame& x_t, const Frame& eps_hat, int t, int t_prev, const DiffusionSchedule& schedule) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be smaller than t");
  return ddim_step_from_x0(predict_x0(x_t, eps_hat, t, schedule), eps_hat, t_prev, schedule);
}

// --- wavelet-domain correction -------------------------------------------

Frame low_band_residual(const WaveletBands& bands, const Frame& y, const DegradationOperator& op) {
  const DegradationOperator low = op.low_band();
  const Frame y_low = op.observe_low(y);
  const Frame projected = low.apply(bands.ll);
  if (!projected.same_shape(y_low))
    throw std::invalid_argument("low_freq_data_fidelity: observation shape incompatible with operator " + op.name());
  return low.apply_pinv(projected - y_low);
}

WaveletBands correct_low_band(const WaveletBands& bands, const Frame& y, const DegradationOperator& op) {
  WaveletBands out = bands;
  out.ll = bands.ll - low_band_residual(bands, y, op);
  return out;
}

Frame low_freq_data_fidelity(const Frame& x0_hat, const Frame& y, const DegradationOperator& op) {
  return idwt_haar(correct_low_band(dwt_haar(x0_hat), y, op));
}

std::vector<Frame> flow_guided_residual_alignment(const std::vector<Frame>& x0_hats, const std::vector<Frame>& ys,
                                                  const std::vector<TrajectorySet>& ll_tracks,
                                                  const DegradationOperator& op, int window) {
  if (window < 1) throw std::invalid_argument("flow_guided_residual_alignment: empty window");
  if (x0_hats.size() != ys.size()) throw std::invalid_argument("flow_guided_residual_alignment: frame count mismatch");
  if (window > 1 && ll_tracks.size() != x0_hats.size())
    throw std::invalid_argument("flow_guided_residual_alignment: one trajectory set per frame required");

  std::vector<WaveletBands> bands;
  std::vector<Frame> residual;
  bands.reserve(x0_hats.size());
  residual.reserve(x0_hats.size());
  for (std::size_t f = 0; f < x0_hats.size(); ++f) {
    bands.push_back(dwt_haar(x0_hats[f]));
    residual.push_back(low_band_residual(bands.back(), ys[f], op));
  }

  std::vector<Frame> out;
  out.reserve(x0_hats.size());
  for (std::size_t f = 0; f < x0_hats.size(); ++f) {
    WaveletBands corrected = bands[f];
    if (window == 1) {
      corrected.ll = bands[f].ll - residual[f];
      out.push_back(idwt_haar(corrected));
      continue;
    }
    const TrajectorySet& tracks = ll_tracks[f];
    const Frame& ll = bands[f].ll;
    if (tracks.height != ll.height() || tracks.width != ll.width() ||
        tracks.starts.size() != static_cast<std::size_t>(ll.height()) * ll.width())
      throw std::invalid_argument("flow_guided_residual_alignment: trajectories do not cover the LL grid");
    Frame mean(ll.channels(), ll.height(), ll.width());
    for (std::size_t i = 0; i < tracks.starts.size(); ++i) {
      const auto& s = tracks.starts[i];
      const auto& chain = tracks.chains[i];
      for (int c = 0; c < ll.channels(); ++c) {
        double sum = residual[f](c, s.v, s.u);
        int members = 1;
        for (int k = 1; k < window && k < static_cast<int>(chain.size()); ++k) {
          const TrajectoryPoint& pt = chain[static_cast<std::size_t>(k)];
          if (pt.is_sentinel()) break;
          sum += residual[static_cast<std::size_t>(pt.frame)](c, pt.v, pt.u);
          ++members;
        }
        mean(c, s.v, s.u) = members == 1 ? sum : sum / members;
      }
    }
    corrected.ll = bands[f].ll - mean;
    out.push_back(idwt_haar(corrected));
  }
  return out;
}

// --- pipeline -------------------------------------------------------------

FlowPair estimate_video_flow(const Video& video, FlowEstimateParams params) {
  FlowPair flows;
  for (std::size_t f = 0; f + 1 < video.size(); ++f) {
    flows.fwd.push_back(estimate_flow_block_matching(video[f], video[f + 1], params.block, params.radius));
    flows.bwd.push_back(estimate_flow_block_matching(video[f + 1], video[f], params.block, params.radius));
  }
  return flows;
}

namespace {

std::vector<FlowField> downsample_all(const std::vector<FlowField>& flows, int factor) {
  std::vector<FlowField> out;
  out.reserve(flows.size());
  for (const auto& f : flows) out.push_back(downsample_flow(f, factor));
  return out;
}

}  // namespace

RestoreResult restore_video(const Video& lq, const DegradationOperator& op, const DiTModel& model,
                            const DiffusionSchedule& schedule, const std::vector<int>& timesteps,
                            const RestoreOptions& options) {
  if (lq.empty()) throw std::invalid_argument("restore_video: empty video");
  for (std::size_t i = 1; i < timesteps.size(); ++i)
    if (timesteps[i] >= timesteps[i - 1]) throw std::invalid_argument("restore_video: timesteps must descend");
  const auto& cfg = model.config();
  const int frames = static_cast<int>(lq.size());

  std::vector<Frame> init;
  init.reserve(lq.size());
  for (const auto& y : lq) init.push_back(op.apply_pinv(y));
  const int height = init.front().height(), width = init.front().width();
  for (const auto& f : init)
    if (f.height() != height || f.width() != width) throw std::invalid_argument("restore_video: ragged video");

  RestoreResult result;
  if (options.flows) {
    result.flows = *options.flows;
  } else if (frames > 1) {
    result.flows = estimate_video_flow(init, options.flow_params);
  }
  if (frames > 1 && (result.flows.fwd.size() != lq.size() - 1 || result.flows.bwd.size() != lq.size() - 1))
    throw std::invalid_argument("restore_video: need frames - 1 forward and backward flows");

  if (timesteps.empty()) {
    for (const auto& f : init) result.frames.push_back(clamp01(f));
    return result;
  }

  // Token-grid and LL-grid motion, each downsampled once from pixel resolution.
  const bool temporal = options.temporal_context && frames > 1;
  std::vector<FlowField> hidden_bwd;
  std::vector<TrajectorySet> hidden_tracks, ll_tracks;
  if (temporal) {
    if (height % cfg.patch_size != 0 || width % cfg.patch_size != 0)
      throw std::invalid_argument("restore_video: frame size must be divisible by the patch size");
    const auto hidden_fwd = downsample_all(result.flows.fwd, cfg.patch_size);
    hidden_bwd = downsample_all(result.flows.bwd, cfg.patch_size);
    hidden_tracks = backward_tracks(hidden_fwd, hidden_bwd, cfg.trajectory_window, options.round_trip_tol);
  }
  const bool align = options.flow_guided_sampler && options.fs_window > 1 && frames > 1;
  if (align) {
    if (height % 2 != 0 || width % 2 != 0)
      throw std::invalid_argument("restore_video: flow-guided sampling needs even frame sizes");
    ll_tracks = backward_tracks(downsample_all(result.flows.fwd, 2), downsample_all(result.flows.bwd, 2),
                                options.fs_window - 1, options.round_trip_tol);
  }

  std::vector<Frame> x;
  x.reserve(lq.size());
  for (int f = 0; f < frames; ++f) {
    const Frame eps = gaussian_frame(init[static_cast<std::size_t>(f)].channels(), height, width,
                                     mix_seed(options.noise_seed, static_cast<std::uint64_t>(f)));
    x.push_back(forward_noising(init[static_cast<std::size_t>(f)], timesteps.front(), eps, schedule));
  }

  const BlockGrid token_grid((height + cfg.patch_size - 1) / cfg.patch_size,
                             (width + cfg.patch_size - 1) / cfg.patch_size, cfg.block_size);
  for (std::size_t step = 0; step < timesteps.size(); ++step) {
    const int t = timesteps[step];
    const int t_prev = step + 1 < timesteps.size() ? timesteps[step + 1] : -1;
    KVCache cache(cfg.cache_horizon(), token_grid.block_count());

    std::vector<Frame> eps_hat, x0;
    eps_hat.reserve(lq.size());
    x0.reserve(lq.size());
    for (int f = 0; f < frames; ++f) {
      DenoiseContext ctx;
      ctx.frame = f;
      ctx.cache = &cache;
      if (temporal) {
        ctx.tracks = &hidden_tracks[static_cast<std::size_t>(f)];
        ctx.flow_to_prev = f > 0 ? &hidden_bwd[static_cast<std::size_t>(f - 1)] : nullptr;
      }
      eps_hat.push_back(denoise_predict(x[static_cast<std::size_t>(f)], t, schedule, ctx, model));
      x0.push_back(predict_x0(x[static_cast<std::size_t>(f)], eps_hat.back(), t, schedule));
    }

    if (options.warp_blend > 0.0) {
      for (int f = 1; f < frames; ++f) {
        const auto warped = bilinear_warp(x0[static_cast<std::size_t>(f - 1)], result.flows.bwd[static_cast<std::size_t>(f - 1)]);
        Frame& cur = x0[static_cast<std::size_t>(f)];
        for (int c = 0; c < cur.channels(); ++c)
          for (int yy = 0; yy < height; ++yy)
            for (int xx = 0; xx < width; ++xx)
              if (warped.valid(yy, xx))
                cur(c, yy, xx) = (1.0 - options.warp_blend) * cur(c, yy, xx) + options.warp_blend * warped.frame(c, yy, xx);
      }
    }

    std::vector<Frame> corrected;
    corrected.reserve(lq.size());
    for (int f = 0; f < frames; ++f) {
      const WaveletBands before = dwt_haar(x0[static_cast<std::size_t>(f)]);
      const WaveletBands after = correct_low_band(before, lq[static_cast<std::size_t>(f)], op);
      if (options.probe && options.probe->on_low_band_correction)
        options.probe->on_low_band_correction(static_cast<int>(step), f, before, after,
                                              op.observe_low(lq[static_cast<std::size_t>(f)]), op.low_band());
      corrected.push_back(idwt_haar(after));
    }
    if (align) corrected = flow_guided_residual_alignment(x0, lq, ll_tracks, op, options.fs_window);
    if (options.probe && options.probe->on_step) options.probe->on_step(static_cast<int>(step), corrected);

    for (int f = 0; f < frames; ++f)
      x[static_cast<std::size_t>(f)] = ddim_step_from_x0(corrected[static_cast<std::size_t>(f)],
                                                         eps_hat[static_cast<std::size_t>(f)], t_prev, schedule);
  }

  for (auto& f : x) result.frames.push_back(clamp01(f));
  return result;
}

}  // namespace ditvr
