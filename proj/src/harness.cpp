#include "ditvr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "ditvr/image_io.hpp"
#include "ditvr/rng.hpp"

namespace ditvr {

using nlohmann::ordered_json;

Method parse_method(const std::string& name) {
  if (name == "per-frame") return Method::PerFrame;
  if (name == "warping") return Method::Warping;
  if (name == "ditvr") return Method::Ditvr;
  throw std::invalid_argument("unknown method: " + name + " (per-frame, warping, ditvr)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::PerFrame: return "per-frame";
    case Method::Warping: return "warping";
    case Method::Ditvr: return "ditvr";
  }
  return "?";
}

FlowSource parse_flow_source(const std::string& name) {
  if (name == "gt") return FlowSource::GroundTruth;
  if (name == "estimated") return FlowSource::Estimated;
  throw std::invalid_argument("unknown flow source: " + name + " (gt, estimated)");
}

std::string to_string(FlowSource s) { return s == FlowSource::GroundTruth ? "gt" : "estimated"; }

std::string Toggles::label() const {
  std::vector<std::string> parts;
  if (warping) parts.push_back("warping");
  if (tattn) parts.push_back("tattn");
  if (stnc > 0) parts.push_back("stnc" + std::to_string(stnc));
  if (fs) parts.push_back("fs");
  if (parts.empty()) return "none";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

Toggles RunConfig::effective_toggles() const {
  switch (method) {
    case Method::PerFrame: return {false, 0, false, false};
    case Method::Warping: return {false, 0, false, true};
    case Method::Ditvr: return toggles;
  }
  return toggles;
}

DiTConfig RunConfig::effective_dit() const {
  DiTConfig out = dit;
  const Toggles t = effective_toggles();
  out.trajectory_attention = t.tattn;
  out.stnc_neighbors = t.stnc;
  out.channels = data.channels;
  out.validate();
  return out;
}

RestoreOptions RunConfig::restore_options(std::uint64_t seed) const {
  const Toggles t = effective_toggles();
  RestoreOptions o;
  o.flow_guided_sampler = t.fs;
  o.fs_window = fs_window;
  o.warp_blend = t.warping ? warp_blend : 0.0;
  o.temporal_context = t.tattn || t.stnc > 0;
  o.noise_seed = mix_seed(seed, 2);
  o.flow_params = flow_params;
  return o;
}

// --- configuration files -------------------------------------------------

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["pattern"] = to_string(cfg.data.pattern);
  j["motion"] = to_string(cfg.data.motion);
  j["du"] = cfg.data.du;
  j["dv"] = cfg.data.dv;
  j["omega"] = cfg.data.omega;
  j["frames"] = cfg.data.frames;
  j["height"] = cfg.data.height;
  j["width"] = cfg.data.width;
  j["channels"] = cfg.data.channels;
  j["task"] = cfg.task.name();
  j["method"] = to_string(cfg.method);
  j["tattn"] = cfg.toggles.tattn;
  j["stnc"] = cfg.toggles.stnc;
  j["fs"] = cfg.toggles.fs;
  j["warping"] = cfg.toggles.warping;
  j["fs_window"] = cfg.fs_window;
  j["warp_blend"] = cfg.warp_blend;
  j["steps"] = cfg.steps;
  j["schedule_steps"] = cfg.schedule_steps;
  j["schedule"] = to_string(cfg.schedule);
  j["seeds"] = cfg.seeds;
  j["sampler_flow"] = to_string(cfg.sampler_flow);
  j["metric_flow"] = to_string(cfg.metric_flow);
  j["flow_block"] = cfg.flow_params.block;
  j["flow_radius"] = cfg.flow_params.radius;
  j["output_dir"] = cfg.output_dir.string();
  j["write_frames"] = cfg.write_frames;
  j["dit"] = ordered_json::parse(config_to_json(cfg.dit));
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text, RunConfig cfg) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("run config: expected a JSON object");
  static const std::vector<std::string> known{
      "pattern", "motion",   "du",         "dv",         "omega",          "frames",   "height",
      "width",   "channels", "task",       "method",     "tattn",          "stnc",     "fs",
      "warping", "fs_window", "warp_blend", "steps",     "schedule_steps", "schedule", "seeds",
      "sampler_flow", "metric_flow", "flow_block", "flow_radius", "output_dir", "write_frames", "dit"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("run config: unknown key '" + key + "'");

  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  auto get_str = [&](const char* key, auto parse, auto& field) {
    if (j.contains(key)) field = parse(j.at(key).get<std::string>());
  };
  get_str("pattern", parse_pattern, cfg.data.pattern);
  get_str("motion", parse_motion, cfg.data.motion);
  get("du", cfg.data.du);
  get("dv", cfg.data.dv);
  get("omega", cfg.data.omega);
  get("frames", cfg.data.frames);
  get("height", cfg.data.height);
  get("width", cfg.data.width);
  get("channels", cfg.data.channels);
  get_str("task", parse_task, cfg.task);
  get_str("method", parse_method, cfg.method);
  get("tattn", cfg.toggles.tattn);
  get("stnc", cfg.toggles.stnc);
  get("fs", cfg.toggles.fs);
  get("warping", cfg.toggles.warping);
  get("fs_window", cfg.fs_window);
  get("warp_blend", cfg.warp_blend);
  get("steps", cfg.steps);
  get("schedule_steps", cfg.schedule_steps);
  get_str("schedule", parse_schedule_kind, cfg.schedule);
  get("seeds", cfg.seeds);
  get_str("sampler_flow", parse_flow_source, cfg.sampler_flow);
  get_str("metric_flow", parse_flow_source, cfg.metric_flow);
  get("flow_block", cfg.flow_params.block);
  get("flow_radius", cfg.flow_params.radius);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  get("write_frames", cfg.write_frames);
  if (j.contains("dit")) cfg.dit = config_from_json(j.at("dit").dump(), cfg.dit);
  return cfg;
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, std::uint64_t seed) {
  ordered_json j;
  const auto op = cfg.task.op();
  j["task"] = cfg.task.name();
  j["operator"] = {{"name", op.name()}, {"scale", op.scale()}, {"sigma", cfg.task.kind == TaskKind::Denoise ? cfg.task.sigma : 0.0}};
  j["method"] = to_string(cfg.method);
  j["toggles"] = cfg.effective_toggles().label();
  j["seed"] = seed;
  j["data_seed"] = seed;
  j["degradation_seed"] = mix_seed(seed, 1);
  j["sampler_seed"] = mix_seed(seed, 2);
  j["model_seed"] = cfg.dit.seed;
  const auto sched = make_schedule(cfg.schedule_steps, cfg.schedule);
  j["timesteps"] = uniform_timesteps(sched, cfg.steps);
  const DiTConfig dit = cfg.effective_dit();
  j["vital_layers"] = std::vector<int>(dit.vital_layers.begin(), dit.vital_layers.end());
  j["sampler_flow"] = to_string(cfg.sampler_flow);
  j["metric_flow"] = to_string(cfg.metric_flow);
  j["config"] = ordered_json::parse(run_config_to_json(cfg));
  j["config"].erase("output_dir");  // keeps manifests of identical runs identical
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

// --- runs ----------------------------------------------------------------

namespace {

std::string method_label(const RunConfig& cfg) {
  if (cfg.method != Method::Ditvr) return to_string(cfg.method);
  return "ditvr:" + cfg.effective_toggles().label();
}

std::string sequence_label(const SyntheticSpec& s) { return to_string(s.pattern) + "-" + to_string(s.motion); }

}  // namespace

RunOutcome run_single(const RunConfig& cfg, std::uint64_t seed, const DiTModel* model, SamplerProbe* probe) {
  const auto start = std::chrono::steady_clock::now();
  RunOutcome out;
  SyntheticSpec spec = cfg.data;
  spec.seed = seed;
  out.clean = gen_synthetic(spec);
  out.lq = degrade(out.clean.frames, cfg.task, mix_seed(seed, 1));

  std::optional<DiTModel> own;
  if (!model) {
    own.emplace(cfg.effective_dit());
    model = &*own;
  }
  const auto sched = make_schedule(cfg.schedule_steps, cfg.schedule);
  const auto timesteps = uniform_timesteps(sched, cfg.steps);
  RestoreOptions opts = cfg.restore_options(seed);
  opts.probe = probe;
  if (cfg.sampler_flow == FlowSource::GroundTruth) opts.flows = out.clean.flows;
  out.restored = restore_video(out.lq, cfg.task.op(), *model, sched, timesteps, opts);

  const std::vector<FlowField> metric_flows = cfg.metric_flow == FlowSource::GroundTruth
                                                  ? out.clean.flows.bwd
                                                  : estimate_video_flow(out.restored.frames, cfg.flow_params).bwd;
  MetricRow& row = out.row;
  row.sequence = sequence_label(spec);
  row.method = method_label(cfg);
  row.task = cfg.task.name();
  row.seed = seed;
  row.flow_source = to_string(cfg.metric_flow);
  row.psnr = mean_psnr(out.restored.frames, out.clean.frames);
  row.ssim = mean_ssim(out.restored.frames, out.clean.frames);
  row.we_e3 = warping_error(out.restored.frames, metric_flows);
  row.fsim = fsim_temporal(out.restored.frames, metric_flows);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

MetricReport run_benchmark(const RunConfig& cfg) {
  MetricReport report;
  std::optional<DiTModel> model;
  std::string model_error;
  try {
    model.emplace(cfg.effective_dit());
  } catch (const std::exception& e) {
    model_error = e.what();
  }
  const std::filesystem::path dir = cfg.output_dir.empty() ? cfg.output_dir : cfg.output_dir / method_label(cfg);
  for (const auto seed : cfg.seeds) {
    try {
      if (!model) throw std::invalid_argument(model_error);
      RunOutcome run = run_single(cfg, seed, &*model);
      std::vector<double> per_frame;
      for (std::size_t f = 0; f < run.restored.frames.size(); ++f)
        per_frame.push_back(psnr(run.restored.frames[f], run.clean.frames[f]));
      if (!dir.empty()) {
        const auto seed_dir = dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(seed_dir);
        write_manifest(seed_dir / "manifest.json", cfg, seed);
        if (cfg.write_frames) write_video(seed_dir / "restored", run.restored.frames);
      }
      report.rows.push_back(run.row);
      report.per_frame_psnr.push_back(std::move(per_frame));
    } catch (const std::exception& e) {
      MetricRow row;
      row.sequence = sequence_label(cfg.data);
      row.method = method_label(cfg);
      row.task = cfg.task.name();
      row.seed = seed;
      row.flow_source = to_string(cfg.metric_flow);
      row.error = e.what();
      report.rows.push_back(row);
      report.per_frame_psnr.emplace_back();
    }
  }
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    report.write_csv(cfg.output_dir / "metrics.csv");
  }
  return report;
}

std::vector<AblationRow> ablation_grid(const RunConfig& base) {
  auto row = [&](Method m, Toggles t) {
    RunConfig c = base;
    c.method = m;
    c.toggles = t;
    return AblationRow{m == Method::Ditvr ? t.label() : to_string(m), c};
  };
  return {
      {"none", [&] { RunConfig c = base; c.method = Method::PerFrame; return c; }()},
      row(Method::Warping, {false, 0, false, true}),
      row(Method::Ditvr, {true, 0, false, false}),
      row(Method::Ditvr, {true, 1, false, false}),
      row(Method::Ditvr, {true, 3, false, false}),
      row(Method::Ditvr, {true, 1, true, false}),
  };
}

AblationResult run_ablation(const RunConfig& base) {
  AblationResult result;
  for (auto& [label, cfg] : ablation_grid(base)) {
    RunConfig c = cfg;
    c.output_dir = base.output_dir.empty() ? base.output_dir : base.output_dir / label;
    const auto start = std::chrono::steady_clock::now();
    MetricReport r = run_benchmark(c);
    result.seconds.emplace_back(label, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      r.rows[i].method = label;
      result.report.rows.push_back(r.rows[i]);
      result.report.per_frame_psnr.push_back(r.per_frame_psnr[i]);
    }
  }
  if (!base.output_dir.empty()) {
    result.report.write_csv(base.output_dir / "ablation.csv");
    write_timings_csv(base.output_dir / "timings.csv", result);
  }
  return result;
}

void write_timings_csv(const std::filesystem::path& path, const AblationResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "row,seconds\n";
  for (const auto& [label, s] : result.seconds) out << label << ',' << format_metric(s) << '\n';
}

void write_flow_dir(const std::filesystem::path& dir, const FlowPair& flows) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < flows.fwd.size(); ++i) {
    std::snprintf(name, sizeof name, "fwd_%04zu.flo", i);
    write_flo(dir / name, flows.fwd[i]);
  }
  for (std::size_t i = 0; i < flows.bwd.size(); ++i) {
    std::snprintf(name, sizeof name, "bwd_%04zu.flo", i);
    write_flo(dir / name, flows.bwd[i]);
  }
}

FlowPair read_flow_dir(const std::filesystem::path& dir) {
  FlowPair flows;
  char name[32];
  for (std::size_t i = 0;; ++i) {
    std::snprintf(name, sizeof name, "fwd_%04zu.flo", i);
    if (!std::filesystem::exists(dir / name)) break;
    flows.fwd.push_back(read_flo(dir / name));
    std::snprintf(name, sizeof name, "bwd_%04zu.flo", i);
    if (!std::filesystem::exists(dir / name))
      throw std::runtime_error("read_flow_dir: " + (dir / name).string() + " missing");
    flows.bwd.push_back(read_flo(dir / name));
  }
  if (flows.fwd.empty()) throw std::runtime_error("read_flow_dir: no fwd_0000.flo in " + dir.string());
  return flows;
}

// --- vital layers ---------------------------------------------------------

TemporalMetric parse_temporal_metric(const std::string& name) {
  if (name == "we") return TemporalMetric::WarpingError;
  if (name == "fsim") return TemporalMetric::FSim;
  throw std::invalid_argument("unknown temporal metric: " + name + " (we, fsim)");
}

VitalAnalysis vital_layer_analysis(const RunConfig& cfg, TemporalMetric metric, int top_k) {
  if (cfg.seeds.empty()) throw std::invalid_argument("vital_layer_analysis: no seeds");
  auto evaluate = [&](const RunConfig& c) {
    const DiTModel model(c.effective_dit());
    double sum = 0.0;
    for (const auto seed : c.seeds) {
      const MetricRow row = run_single(c, seed, &model).row;
      sum += metric == TemporalMetric::WarpingError ? row.we_e3 : row.fsim;
    }
    return sum / static_cast<double>(c.seeds.size());
  };

  VitalAnalysis out;
  out.reference = evaluate(cfg);
  for (int l = 0; l < cfg.dit.num_layers; ++l) {
    VitalScore s{l, 0.0};
    if (cfg.dit.is_vital(l)) {
      RunConfig reduced = cfg;
      reduced.dit.vital_layers.erase(l);
      const double v = evaluate(reduced);
      s.score = metric == TemporalMetric::WarpingError ? v - out.reference : out.reference - v;
    }
    out.scores.push_back(s);
  }
  std::vector<VitalScore> ranked = out.scores;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  for (int i = 0; i < top_k && i < static_cast<int>(ranked.size()); ++i)
    out.recommended.push_back(ranked[static_cast<std::size_t>(i)].layer);
  std::sort(out.recommended.begin(), out.recommended.end());
  return out;
}

void VitalAnalysis::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "layer,score,recommended\n";
  for (const auto& s : scores) {
    const bool rec = std::find(recommended.begin(), recommended.end(), s.layer) != recommended.end();
    out << s.layer << ',' << format_metric(s.score) << ',' << (rec ? 1 : 0) << '\n';
  }
}

}  // namespace ditvr
