#include "ditvr/flow.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ditvr/image_ops.hpp"

namespace ditvr {

FlowField estimate_flow_block_matching(const Frame& frame_a, const Frame& frame_b, int block, int radius) {
  if (!frame_a.same_shape(frame_b)) throw std::invalid_argument("estimate_flow_block_matching: frame size mismatch");
  if (block < 1) throw std::invalid_argument("estimate_flow_block_matching: block must be >= 1");
  if (radius < 0) throw std::invalid_argument("estimate_flow_block_matching: radius must be >= 0");
  const int h = frame_a.height();
  const int w = frame_a.width();
  FlowField flow(h, w);

  for (int by = 0; by < h; by += block) {
    for (int bx = 0; bx < w; bx += block) {
      const int ey = std::min(by + block, h);
      const int ex = std::min(bx + block, w);
      double best_sad = std::numeric_limits<double>::infinity();
      int best_u = 0, best_v = 0;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          double sad = 0.0;
          for (int c = 0; c < frame_a.channels(); ++c) {
            const Plane& pa = frame_a.plane(c);
            const Plane& pb = frame_b.plane(c);
            for (int y = by; y < ey; ++y) {
              const int sy = std::clamp(y + dv, 0, h - 1);
              for (int x = bx; x < ex; ++x) sad += std::abs(pa(y, x) - pb(sy, std::clamp(x + du, 0, w - 1)));
            }
          }
          bool better = sad < best_sad;
          if (sad == best_sad) {
            const int mag = du * du + dv * dv;
            const int best_mag = best_u * best_u + best_v * best_v;
            better = mag < best_mag || (mag == best_mag && std::pair(du, dv) < std::pair(best_u, best_v));
          }
          if (better) {
            best_sad = sad;
            best_u = du;
            best_v = dv;
          }
        }
      }
      flow.du.block(by, bx, ey - by, ex - bx).setConstant(best_u);
      flow.dv.block(by, bx, ey - by, ex - bx).setConstant(best_v);
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) flow.valid(y, x) = inside(x + flow.du(y, x), y + flow.dv(y, x), h, w);
  return flow;
}

FlowField downsample_flow(const FlowField& flow, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample_flow: factor must be >= 1");
  if (flow.height() % factor != 0 || flow.width() % factor != 0)
    throw std::invalid_argument("downsample_flow: dimensions not divisible by " + std::to_string(factor));
  if (factor == 1) return flow;
  const double inv = 1.0 / factor;
  FlowField out(block_mean(flow.du, factor) * inv, block_mean(flow.dv, factor) * inv);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out.valid(y, x) = flow.valid.block(y * factor, x * factor, factor, factor).all();
  return out;
}

MappedPoint forward_map(double u, double v, const FlowField& flow) {
  MappedPoint m;
  m.u = u + sample_bilinear(flow.du, u, v);
  m.v = v + sample_bilinear(flow.dv, u, v);
  m.ui = round_coord(m.u);
  m.vi = round_coord(m.v);
  m.in_bounds = m.ui >= 0 && m.vi >= 0 && m.ui < flow.width() && m.vi < flow.height();
  return m;
}

TrajectorySet build_trajectories(const std::vector<FlowField>& fwd, const std::vector<FlowField>& bwd,
                                 const std::vector<PixelCoord>& starts, int round_trip_tol, int start_frame,
                                 int frame_step) {
  if (fwd.size() != bwd.size()) throw std::invalid_argument("build_trajectories: fwd/bwd length mismatch");
  if (round_trip_tol < 0) throw std::invalid_argument("build_trajectories: negative tolerance");
  TrajectorySet set;
  set.starts = starts;
  if (!fwd.empty()) {
    set.height = fwd.front().height();
    set.width = fwd.front().width();
    for (std::size_t i = 0; i < fwd.size(); ++i)
      if (!fwd[i].same_size(set.height, set.width) || !bwd[i].same_size(set.height, set.width))
        throw std::invalid_argument("build_trajectories: flow sizes differ");
  }
  const std::size_t steps = fwd.size() + 1;
  set.chains.reserve(starts.size());
  for (const auto& s : starts) {
    if (!fwd.empty() && (s.u < 0 || s.v < 0 || s.u >= set.width || s.v >= set.height))
      throw std::invalid_argument("build_trajectories: start outside frame");
    std::vector<TrajectoryPoint> chain(steps, TrajectoryPoint::sentinel());
    chain[0] = {start_frame, s.u, s.v};
    for (std::size_t i = 0; i + 1 < steps; ++i) {
      const TrajectoryPoint cur = chain[i];
      if (cur.is_sentinel()) break;
      const MappedPoint next = forward_map(cur.u, cur.v, fwd[i]);
      if (!next.in_bounds) break;
      const MappedPoint back = forward_map(next.ui, next.vi, bwd[i]);
      if (std::abs(back.u - cur.u) > round_trip_tol || std::abs(back.v - cur.v) > round_trip_tol) break;
      chain[i + 1] = {start_frame + frame_step * static_cast<int>(i + 1), next.ui, next.vi};
    }
    set.chains.push_back(std::move(chain));
  }
  return set;
}

std::vector<PixelCoord> all_pixels(int height, int width) {
  std::vector<PixelCoord> out;
  out.reserve(static_cast<std::size_t>(height) * width);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) out.push_back({u, v});
  return out;
}

std::vector<TrajectorySet> backward_tracks(const std::vector<FlowField>& fwd, const std::vector<FlowField>& bwd,
                                           int window, int round_trip_tol) {
  if (fwd.size() != bwd.size()) throw std::invalid_argument("backward_tracks: fwd/bwd length mismatch");
  if (fwd.empty()) throw std::invalid_argument("backward_tracks: need at least one flow pair");
  if (window < 1) throw std::invalid_argument("backward_tracks: window must be >= 1");
  const int frames = static_cast<int>(fwd.size()) + 1;
  const auto starts = all_pixels(fwd.front().height(), fwd.front().width());
  std::vector<TrajectorySet> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    std::vector<FlowField> to_past, to_future;
    for (int k = 1; k <= window && f - k >= 0; ++k) {
      to_past.push_back(bwd[static_cast<std::size_t>(f - k)]);
      to_future.push_back(fwd[static_cast<std::size_t>(f - k)]);
    }
    auto set = build_trajectories(to_past, to_future, starts, round_trip_tol, f, -1);
    set.height = fwd.front().height();
    set.width = fwd.front().width();
    out.push_back(std::move(set));
  }
  return out;
}

Mask occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tol) {
  if (!bwd.same_size(fwd.height(), fwd.width())) throw std::invalid_argument("occlusion_mask: size mismatch");
  Mask mask(fwd.height(), fwd.width());
  for (int y = 0; y < fwd.height(); ++y) {
    for (int x = 0; x < fwd.width(); ++x) {
      const double tx = x + fwd.du(y, x);
      const double ty = y + fwd.dv(y, x);
      const double ex = fwd.du(y, x) + sample_bilinear(bwd.du, tx, ty);
      const double ey = fwd.dv(y, x) + sample_bilinear(bwd.dv, tx, ty);
      mask(y, x) = std::max(std::abs(ex), std::abs(ey)) <= tol;
    }
  }
  return mask;
}

namespace {

constexpr float kFloMagic = 202021.25f;  // "PIEH" read as a little-endian float32

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw std::runtime_error("read_flo: truncated file");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_flo: cannot open " + path.string());
  out.write("PIEH", 4);
  put_u32(out, static_cast<std::uint32_t>(flow.width()));
  put_u32(out, static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.du(y, x))));
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.dv(y, x))));
    }
  }
  if (!out) throw std::runtime_error("write_flo: write failed for " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_flo: cannot open " + path.string());
  if (std::bit_cast<float>(get_u32(in)) != kFloMagic) throw std::runtime_error("read_flo: bad magic in " + path.string());
  const auto width = static_cast<std::int32_t>(get_u32(in));
  const auto height = static_cast<std::int32_t>(get_u32(in));
  if (width < 1 || height < 1 || width > (1 << 16) || height > (1 << 16))
    throw std::runtime_error("read_flo: implausible dimensions in " + path.string());
  Plane du(height, width), dv(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      du(y, x) = std::bit_cast<float>(get_u32(in));
      dv(y, x) = std::bit_cast<float>(get_u32(in));
    }
  }
  return FlowField(std::move(du), std::move(dv));
}

}  // namespace ditvr
