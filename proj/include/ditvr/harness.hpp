#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ditvr/dit.hpp"
#include "ditvr/metrics.hpp"
#include "ditvr/sampler.hpp"
#include "ditvr/schedule.hpp"
#include "ditvr/synthetic.hpp"

namespace ditvr {

enum class Method { PerFrame, Warping, Ditvr };
Method parse_method(const std::string& name);
std::string to_string(Method m);

enum class FlowSource { GroundTruth, Estimated };
FlowSource parse_flow_source(const std::string& name);
std::string to_string(FlowSource s);

struct Toggles {
  bool tattn = true;
  int stnc = 1;  // temporal neighbours, 0 = off
  bool fs = true;
  bool warping = false;

  std::string label() const;  // e.g. "tattn+stnc1+fs", "none"
};

struct RunConfig {
  SyntheticSpec data;
  TaskSpec task;
  Method method = Method::Ditvr;
  Toggles toggles;
  int fs_window = 2;
  double warp_blend = 0.5;
  int steps = 25;
  int schedule_steps = 1000;
  ScheduleKind schedule = ScheduleKind::Linear;
  DiTConfig dit;
  std::vector<std::uint64_t> seeds{0};
  FlowSource sampler_flow = FlowSource::GroundTruth;  // flows fed to the sampler
  FlowSource metric_flow = FlowSource::GroundTruth; // flows used for WE / FSim
  FlowEstimateParams flow_params;
  std::filesystem::path output_dir;  // empty: nothing written
  bool write_frames = true;

  // Toggles implied by the method (per-frame and warping force everything off).
  Toggles effective_toggles() const;
  DiTConfig effective_dit() const;
  RestoreOptions restore_options(std::uint64_t seed) const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text, RunConfig base = {});
void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  MetricRow row;
  SyntheticVideo clean;
  Video lq;
  RestoreResult restored;
  double seconds = 0.0;
};

// One (config, seed) run on the synthetic sequence.
RunOutcome run_single(const RunConfig& cfg, std::uint64_t seed, const DiTModel* model = nullptr,
                      SamplerProbe* probe = nullptr);

// Every seed of cfg; writes metrics.csv, manifests and frames under
// output_dir when set. Failed runs are recorded with an error message.
MetricReport run_benchmark(const RunConfig& cfg);

struct AblationRow {
  std::string label;
  RunConfig config;
};

// all-off, warping, TAttn, TAttn+STNC1, TAttn+STNC3, TAttn+STNC1+FS.
std::vector<AblationRow> ablation_grid(const RunConfig& base);

struct AblationResult {
  MetricReport report;   // one row per (grid row, seed), method column carries the label
  std::vector<std::pair<std::string, double>> seconds;  // total wall-clock per grid row
};

AblationResult run_ablation(const RunConfig& base);
void write_timings_csv(const std::filesystem::path& path, const AblationResult& result);

// <dir>/fwd_0000.flo ... and <dir>/bwd_0000.flo ...
void write_flow_dir(const std::filesystem::path& dir, const FlowPair& flows);
FlowPair read_flow_dir(const std::filesystem::path& dir);

enum class TemporalMetric { WarpingError, FSim };
TemporalMetric parse_temporal_metric(const std::string& name);

struct VitalScore {
  int layer = 0;
  double score = 0.0;  // degradation vs the reference model (larger = more important)
};

struct VitalAnalysis {
  double reference = 0.0;
  std::vector<VitalScore> scores;  // one per layer
  std::vector<int> recommended;    // top-k layers by score

  void write_csv(const std::filesystem::path& path) const;
};

// Reference: cfg with its vital layers. For each layer l, rerun with l removed
// from vital_layers (plain self-attention there) and score the temporal
// metric degradation averaged over seeds. Layers outside vital_layers score 0
// without running.
VitalAnalysis vital_layer_analysis(const RunConfig& cfg, TemporalMetric metric, int top_k = 2);

}  // namespace ditvr
