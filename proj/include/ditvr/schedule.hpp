#pragma once

#include <string>
#include <vector>

namespace ditvr {

enum class ScheduleKind { Linear, Cosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

// Cumulative signal levels alpha_bar[t], t in [0, T), strictly decreasing.
//   linear: beta_t = 1e-4 + (0.02 - 1e-4) * t / (T - 1)   (beta_0 = 1e-4 when T = 1)
//           alpha_bar_t = prod_{s <= t} (1 - beta_s)
//   cosine: g(s) = cos^2(((s / T) + 0.008) / 1.008 * pi / 2)
//           beta_t = min(1 - g(t + 1) / g(t), 0.999), alpha_bar_t = prod_{s <= t} (1 - beta_s)
// Timestep -1 denotes the clean end point with alpha_bar = 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule(std::vector<double> alpha_bar, ScheduleKind kind);

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  ScheduleKind kind() const { return kind_; }
  double alpha_bar(int t) const;  // t in [-1, T)
  double alpha(int t) const;      // alpha_bar(t) / alpha_bar(t - 1)
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  std::vector<double> alpha_bar_;
  ScheduleKind kind_;
};

DiffusionSchedule make_schedule(int steps, ScheduleKind kind);

// `count` timesteps with uniform stride, descending, ending at 0:
// t_i = (count - 1 - i) * (T / count).
std::vector<int> uniform_timesteps(const DiffusionSchedule& schedule, int count);

}  // namespace ditvr
