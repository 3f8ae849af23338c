#include "ditvr/synthetic.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "ditvr/image_ops.hpp"
#include "ditvr/rng.hpp"

namespace ditvr {

Pattern parse_pattern(const std::string& name) {
  if (name == "checker") return Pattern::Checker;
  if (name == "perlin") return Pattern::Perlin;
  if (name == "glyphs") return Pattern::Glyphs;
  throw std::invalid_argument("unknown pattern: " + name + " (checker, perlin, glyphs)");
}

Motion parse_motion(const std::string& name) {
  if (name == "translate") return Motion::Translate;
  if (name == "rotate") return Motion::Rotate;
  if (name == "mixed") return Motion::Mixed;
  throw std::invalid_argument("unknown motion: " + name + " (translate, rotate, mixed)");
}

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::Checker: return "checker";
    case Pattern::Perlin: return "perlin";
    case Pattern::Glyphs: return "glyphs";
  }
  return "?";
}

std::string to_string(Motion m) {
  switch (m) {
    case Motion::Translate: return "translate";
    case Motion::Rotate: return "rotate";
    case Motion::Mixed: return "mixed";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (frames < 2) throw std::invalid_argument("synthetic: need at least 2 frames");
  if (height < 1 || width < 1) throw std::invalid_argument("synthetic: frame size must be positive");
  if (channels != 1 && channels != 3) throw std::invalid_argument("synthetic: channels must be 1 or 3");
  if (!std::isfinite(du) || !std::isfinite(dv) || !std::isfinite(omega))
    throw std::invalid_argument("synthetic: motion parameters must be finite");
}

namespace {

// Lattice value in [0, 1) from a hash of (seed, i, j).
double lattice(std::uint64_t seed, long long i, long long j) {
  const std::uint64_t h = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(j));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<long long>(fx), j = static_cast<long long>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(seed, i, j), b = lattice(seed, i + 1, j);
  const double c = lattice(seed, i, j + 1), d = lattice(seed, i + 1, j + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

// 5x7 bitmaps, one row per byte (low 5 bits, MSB = leftmost column).
constexpr std::array<std::array<std::uint8_t, 7>, 10> kGlyphs{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
    {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
    {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
}};

bool glyph_bit(std::uint64_t seed, double x, double y) {
  constexpr int cell_w = 7, cell_h = 9, px = 2;  // glyph cell incl. spacing, pixel scale
  const double gx = std::floor(x / px), gy = std::floor(y / px);
  const auto cx = static_cast<long long>(std::floor(gx / cell_w));
  const auto cy = static_cast<long long>(std::floor(gy / cell_h));
  const int lx = static_cast<int>(gx - static_cast<double>(cx) * cell_w) - 1;
  const int ly = static_cast<int>(gy - static_cast<double>(cy) * cell_h) - 1;
  if (lx < 0 || lx >= 5 || ly < 0 || ly >= 7) return false;
  const auto& g = kGlyphs[static_cast<std::size_t>(lattice(seed, cx, cy) * kGlyphs.size())];
  return (g[static_cast<std::size_t>(ly)] >> (4 - lx)) & 1u;
}

}  // namespace

double pattern_value(const SyntheticSpec& spec, int channel, double x, double y) {
  const std::uint64_t seed = mix_seed(spec.seed, 100 + static_cast<std::uint64_t>(channel));
  switch (spec.pattern) {
    case Pattern::Checker: {
      const double period = 8.0 + 8.0 * lattice(seed, 0, 0);
      const double phase_x = period * lattice(seed, 1, 0), phase_y = period * lattice(seed, 0, 1);
      const double sx = std::sin(2.0 * std::numbers::pi * (x + phase_x) / period);
      const double sy = std::sin(2.0 * std::numbers::pi * (y + phase_y) / period);
      return 0.5 + 0.4 * std::tanh(3.0 * sx) * std::tanh(3.0 * sy);
    }
    case Pattern::Perlin: {
      double v = 0.0, amp = 0.5, freq = 1.0 / 12.0, norm = 0.0;
      for (int o = 0; o < 4; ++o) {
        v += amp * value_noise(mix_seed(seed, static_cast<std::uint64_t>(o)), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
      }
      return std::clamp(0.1 + 0.8 * v / norm, 0.0, 1.0);
    }
    case Pattern::Glyphs:
      return glyph_bit(seed, x, y) ? 0.85 : 0.15;
  }
  return 0.0;
}

SyntheticVideo gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const double cx = 0.5 * (spec.width - 1), cy = 0.5 * (spec.height - 1);
  const bool rotates = spec.motion != Motion::Translate;
  const bool shifts = spec.motion != Motion::Rotate;
  const double w = rotates ? spec.omega : 0.0;
  const double tx = shifts ? spec.du : 0.0, ty = shifts ? spec.dv : 0.0;

  // M^{-f}(p): undo f steps of (rotate about c, then shift).
  auto inverse_motion = [&](double x, double y, int f) {
    for (int k = 0; k < f; ++k) {
      const double ux = x - tx - cx, uy = y - ty - cy;
      x = std::cos(w) * ux + std::sin(w) * uy + cx;
      y = -std::sin(w) * ux + std::cos(w) * uy + cy;
    }
    return std::pair{x, y};
  };

  SyntheticVideo out;
  for (int f = 0; f < spec.frames; ++f) {
    Frame frame(spec.channels, spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const auto [sx, sy] = inverse_motion(x, y, f);
        for (int c = 0; c < spec.channels; ++c) frame(c, y, x) = pattern_value(spec, c, sx, sy);
      }
    out.frames.push_back(std::move(frame));
  }

  Plane fu(spec.height, spec.width), fv(spec.height, spec.width);
  Plane bu(spec.height, spec.width), bv(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double rx = x - cx, ry = y - cy;
      fu(y, x) = std::cos(w) * rx - std::sin(w) * ry + cx + tx - x;
      fv(y, x) = std::sin(w) * rx + std::cos(w) * ry + cy + ty - y;
      const auto [px, py] = inverse_motion(x, y, 1);
      bu(y, x) = px - x;
      bv(y, x) = py - y;
    }
  for (int f = 0; f + 1 < spec.frames; ++f) {
    out.flows.fwd.emplace_back(fu, fv);
    out.flows.bwd.emplace_back(bu, bv);
  }
  return out;
}

DegradationOperator TaskSpec::op() const {
  return kind == TaskKind::Denoise ? DegradationOperator::identity() : DegradationOperator::super_resolution(scale);
}

std::string TaskSpec::name() const {
  if (kind == TaskKind::SuperResolution) return "sr" + std::to_string(scale);
  return "denoise" + std::to_string(static_cast<int>(std::lround(sigma * 255.0)));
}

TaskSpec parse_task(const std::string& name) {
  TaskSpec t;
  auto number = [&](std::size_t prefix) {
    const std::string rest = name.substr(prefix);
    if (rest.empty() || rest.find_first_not_of("0123456789.") != std::string::npos)
      throw std::invalid_argument("bad task: " + name + " (sr<scale> or denoise<sigma*255>)");
    return std::stod(rest);
  };
  if (name.rfind("sr", 0) == 0) {
    t.kind = TaskKind::SuperResolution;
    t.scale = static_cast<int>(number(2));
    if (t.scale < 1 || t.scale != number(2)) throw std::invalid_argument("bad task: " + name);
  } else if (name.rfind("denoise", 0) == 0) {
    t.kind = TaskKind::Denoise;
    t.scale = 1;
    t.sigma = number(7) / 255.0;
  } else {
    throw std::invalid_argument("unknown task: " + name + " (sr<scale> or denoise<sigma*255>)");
  }
  return t;
}

Video degrade(const Video& video, const TaskSpec& task, std::uint64_t seed) {
  Video out;
  out.reserve(video.size());
  const auto op = task.op();
  for (std::size_t f = 0; f < video.size(); ++f) {
    if (task.kind == TaskKind::Denoise)
      out.push_back(add_gaussian_noise(video[f], task.sigma, mix_seed(seed, f)));
    else
      out.push_back(op.apply(video[f]));
  }
  return out;
}

}  // namespace ditvr
