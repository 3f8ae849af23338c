#pragma once

#include <cstdint>
#include <string>

#include "ditvr/sampler.hpp"
#include "ditvr/tensor.hpp"

namespace ditvr {

enum class Pattern { Checker, Perlin, Glyphs };
enum class Motion { Translate, Rotate, Mixed };

Pattern parse_pattern(const std::string& name);
Motion parse_motion(const std::string& name);
std::string to_string(Pattern p);
std::string to_string(Motion m);

// Frame f is the pattern seen through the per-frame motion M applied f times:
// I_f(p) = P(M^{-f}(p)), with
//   translate: M(p) = p + (du, dv)
//   rotate:    M(p) = R(omega) (p - c) + c, c the frame centre
//   mixed:     M(p) = R(omega) (p - c) + c + (du, dv)
// so the forward flow is M(p) - p and the backward flow M^{-1}(p) - p for every pair.
struct SyntheticSpec {
  Pattern pattern = Pattern::Perlin;
  Motion motion = Motion::Translate;
  double du = 2.0;
  double dv = 2.0;
  double omega = 0.02;  // radians per frame
  int frames = 8;
  int height = 64;
  int width = 64;
  int channels = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticVideo {
  Video frames;
  FlowPair flows;  // exact ground truth
};

SyntheticVideo gen_synthetic(const SyntheticSpec& spec);

// Continuous pattern intensity in [0, 1] at (x, y) for channel c.
double pattern_value(const SyntheticSpec& spec, int channel, double x, double y);

struct TaskSpec {
  TaskKind kind = TaskKind::SuperResolution;
  int scale = 4;
  double sigma = 50.0 / 255.0;

  DegradationOperator op() const;
  std::string name() const;  // "sr4" or "denoise50"
};

TaskSpec parse_task(const std::string& name);

// sr: per-frame average pooling. denoise: additive noise, frame f seeded with
// mix_seed(seed, f).
Video degrade(const Video& video, const TaskSpec& task, std::uint64_t seed);

}  // namespace ditvr
