// ditvr command line: gen, flow, restore, ablate, vital, metrics.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ditvr/harness.hpp"
#include "ditvr/image_io.hpp"
#include "ditvr/metrics.hpp"
#include "ditvr/rng.hpp"

using namespace ditvr;

namespace {

constexpr const char* kOutputRootEnv = "DITVR_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / p;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Flag-backed values that feed a RunConfig.
struct RunFlags {
  std::string pattern = "perlin", motion = "translate", task = "sr4", method = "ditvr";
  std::string schedule = "linear", sampler_flow = "gt", metric_flow = "gt";
  double du = 2.0, dv = 2.0, omega = 0.02, warp_blend = 0.5;
  int frames = 8, height = 64, width = 64, channels = 1;
  int steps = 25, schedule_steps = 1000, fs_window = 2, stnc = 1, num_seeds = 0;
  int flow_block = 8, flow_radius = 4;
  bool tattn = true, fs = true, warping = false, no_frames = false;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "out", config, model_config;

  void add_data(CLI::App* app) {
    app->add_option("--pattern", pattern, "checker | perlin | glyphs")->capture_default_str();
    app->add_option("--motion", motion, "translate | rotate | mixed")->capture_default_str();
    app->add_option("--du", du, "horizontal shift per frame (px)")->capture_default_str();
    app->add_option("--dv", dv, "vertical shift per frame (px)")->capture_default_str();
    app->add_option("--omega", omega, "rotation per frame (rad)")->capture_default_str();
    app->add_option("--frames", frames, "frame count")->capture_default_str();
    app->add_option("--height", height)->capture_default_str();
    app->add_option("--width", width)->capture_default_str();
    app->add_option("--channels", channels, "1 or 3")->capture_default_str();
    app->add_option("--task", task, "sr<scale> or denoise<sigma*255>, e.g. sr4, denoise50")->capture_default_str();
    app->add_option("--seeds", seeds, "seed list")->capture_default_str();
    app->add_option("--num-seeds", num_seeds, "shorthand for --seeds 0..N-1 (0 = use --seeds)")->capture_default_str();
    app->add_option("--out", out, std::string("output directory, relative to $") + kOutputRootEnv + " when set")
        ->capture_default_str();
    app->add_option("--config", config, "JSON run config; its keys override flags");
  }

  void add_sampler(CLI::App* app) {
    app->add_option("--method", method, "per-frame | warping | ditvr")->capture_default_str();
    app->add_option("--tattn", tattn, "trajectory cross-attention at vital layers")->capture_default_str();
    app->add_option("--stnc", stnc, "temporal neighbour blocks (0 = cache neighbours off)")->capture_default_str();
    app->add_option("--fs", fs, "flow-guided residual alignment")->capture_default_str();
    app->add_option("--warping", warping, "blend with the warped previous estimate")->capture_default_str();
    app->add_option("--fs-window", fs_window, "frames averaged per trajectory")->capture_default_str();
    app->add_option("--warp-blend", warp_blend, "blend weight of the warping baseline")->capture_default_str();
    app->add_option("--steps", steps, "sampling steps")->capture_default_str();
    app->add_option("--schedule-steps", schedule_steps, "diffusion schedule length T")->capture_default_str();
    app->add_option("--schedule", schedule, "linear | cosine")->capture_default_str();
    app->add_option("--sampler-flow", sampler_flow, "gt | estimated")->capture_default_str();
    app->add_option("--metric-flow", metric_flow, "gt | estimated")->capture_default_str();
    app->add_option("--flow-block", flow_block, "block-matching block size")->capture_default_str();
    app->add_option("--flow-radius", flow_radius, "block-matching search radius")->capture_default_str();
    app->add_option("--model-config", model_config, "DiT config JSON");
    app->add_flag("--no-frames", no_frames, "skip writing restored frames");
  }

  RunConfig build() const {
    RunConfig cfg;
    cfg.data.pattern = parse_pattern(pattern);
    cfg.data.motion = parse_motion(motion);
    cfg.data.du = du;
    cfg.data.dv = dv;
    cfg.data.omega = omega;
    cfg.data.frames = frames;
    cfg.data.height = height;
    cfg.data.width = width;
    cfg.data.channels = channels;
    cfg.task = parse_task(task);
    cfg.method = parse_method(method);
    cfg.toggles = {tattn, stnc, fs, warping};
    cfg.fs_window = fs_window;
    cfg.warp_blend = warp_blend;
    cfg.steps = steps;
    cfg.schedule_steps = schedule_steps;
    cfg.schedule = parse_schedule_kind(schedule);
    cfg.seeds = seeds;
    if (num_seeds > 0) {
      cfg.seeds.clear();
      for (int i = 0; i < num_seeds; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(i));
    }
    cfg.sampler_flow = parse_flow_source(sampler_flow);
    cfg.metric_flow = parse_flow_source(metric_flow);
    cfg.flow_params = {flow_block, flow_radius};
    cfg.output_dir = out;
    cfg.write_frames = !no_frames;
    if (!model_config.empty()) cfg.dit = load_config(model_config);
    if (!config.empty()) cfg = run_config_from_json(slurp(config), cfg);
    cfg.output_dir = resolve_output(cfg.output_dir);
    return cfg;
  }
};

void print_report(const MetricReport& r) { std::cout << r.to_csv(); }

int cmd_gen(const RunFlags& f) {
  const RunConfig cfg = f.build();
  for (const auto seed : cfg.seeds) {
    SyntheticSpec spec = cfg.data;
    spec.seed = seed;
    const SyntheticVideo v = gen_synthetic(spec);
    const auto dir = cfg.output_dir / ("seed_" + std::to_string(seed));
    write_video(dir / "clean", v.frames);
    write_video(dir / "lq", degrade(v.frames, cfg.task, mix_seed(seed, 1)));
    write_flow_dir(dir / "flows", v.flows);
    std::ofstream(dir / "config.json") << run_config_to_json(cfg) << '\n';
    std::cout << "wrote " << dir.string() << '\n';
  }
  return 0;
}

int cmd_flow(const std::string& input, const std::string& out, int block, int radius) {
  const Video video = read_video(input);
  const FlowPair flows = estimate_video_flow(video, {block, radius});
  const auto dir = resolve_output(out);
  write_flow_dir(dir, flows);
  std::cout << "wrote " << flows.fwd.size() << " flow pairs to " << dir.string() << '\n';
  return 0;
}

int cmd_restore(const RunFlags& f, const std::string& input, const std::string& flows_dir,
                const std::string& weights) {
  const RunConfig cfg = f.build();
  if (input.empty()) {
    if (!weights.empty()) throw std::invalid_argument("--weights needs --input; synthetic runs use the seeded model");
    print_report(run_benchmark(cfg));
    return 0;
  }
  DiTModel model(cfg.effective_dit());
  if (!weights.empty()) model.load_weights(weights);
  const Video lq = read_video(input);
  const auto sched = make_schedule(cfg.schedule_steps, cfg.schedule);
  RestoreOptions opts = cfg.restore_options(cfg.seeds.front());
  if (!flows_dir.empty()) opts.flows = read_flow_dir(flows_dir);
  const RestoreResult r = restore_video(lq, cfg.task.op(), model, sched, uniform_timesteps(sched, cfg.steps), opts);
  write_video(cfg.output_dir / "restored", r.frames);
  write_flow_dir(cfg.output_dir / "flows", r.flows);
  write_manifest(cfg.output_dir / "manifest.json", cfg, cfg.seeds.front());
  save_config(cfg.output_dir / "model.json", model.config());
  model.save_weights(cfg.output_dir / "weights.bin");
  std::cout << "wrote " << r.frames.size() << " frames to " << (cfg.output_dir / "restored").string() << '\n';
  return 0;
}

int cmd_ablate(const RunFlags& f) {
  const RunConfig cfg = f.build();
  const AblationResult r = run_ablation(cfg);
  print_report(r.report);
  for (const auto& [label, s] : r.seconds) std::cerr << label << ": " << format_metric(s) << " s\n";
  return 0;
}

int cmd_vital(const RunFlags& f, const std::string& metric, int top_k, bool all_layers) {
  RunConfig cfg = f.build();
  if (all_layers) {
    cfg.dit.vital_layers.clear();
    for (int l = 0; l < cfg.dit.num_layers; ++l) cfg.dit.vital_layers.insert(l);
  }
  const VitalAnalysis a = vital_layer_analysis(cfg, parse_temporal_metric(metric), top_k);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    a.write_csv(cfg.output_dir / "vital.csv");
  }
  std::cout << "reference," << format_metric(a.reference) << '\n';
  for (const auto& s : a.scores) std::cout << "layer " << s.layer << ',' << format_metric(s.score) << '\n';
  std::cout << "recommended";
  for (int l : a.recommended) std::cout << ' ' << l;
  std::cout << '\n';
  return 0;
}

int cmd_metrics(const std::string& restored, const std::string& reference, const std::string& flows_dir,
                const std::string& out, const std::string& sequence, const std::string& method,
                const std::string& task, std::uint64_t seed, int block, int radius) {
  const Video a = read_video(restored);
  const Video b = read_video(reference);
  MetricReport report;
  MetricRow row;
  row.sequence = sequence;
  row.method = method;
  row.task = task;
  row.seed = seed;
  row.psnr = mean_psnr(a, b);
  row.ssim = mean_ssim(a, b);
  std::vector<FlowField> flows;
  if (!flows_dir.empty()) {
    flows = read_flow_dir(flows_dir).bwd;
    row.flow_source = "file";
  } else {
    flows = estimate_video_flow(b, {block, radius}).bwd;
    row.flow_source = "estimated";
  }
  row.we_e3 = warping_error(a, flows);
  row.fsim = fsim_temporal(a, flows);
  report.rows.push_back(row);
  if (!out.empty()) {
    const auto p = resolve_output(out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    report.write_csv(p);
  }
  print_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot video restoration with a toy trajectory-aware diffusion transformer"};
  app.require_subcommand(1);

  RunFlags gen_f, restore_f, ablate_f, vital_f;
  auto* gen = app.add_subcommand("gen", "generate a synthetic video with ground-truth flow and its degraded copy");
  gen_f.add_data(gen);

  std::string flow_in, flow_out = "flows";
  int flow_block = 8, flow_radius = 4;
  auto* flow = app.add_subcommand("flow", "estimate forward/backward flow between consecutive frames");
  flow->add_option("--input", flow_in, "directory of frame_NNNN.ppm")->required();
  flow->add_option("--out", flow_out, "output directory for .flo files")->capture_default_str();
  flow->add_option("--block", flow_block)->capture_default_str();
  flow->add_option("--radius", flow_radius)->capture_default_str();

  std::string restore_in, restore_flows, restore_weights;
  auto* restore = app.add_subcommand("restore", "restore a video (frames from --input, or a synthetic benchmark)");
  restore_f.add_data(restore);
  restore_f.add_sampler(restore);
  restore->add_option("--input", restore_in, "degraded frames; omit to run on generated data");
  restore->add_option("--flows", restore_flows, "directory with fwd_/bwd_NNNN.flo at output resolution");
  restore->add_option("--weights", restore_weights, "weight snapshot to load");

  auto* ablate = app.add_subcommand("ablate", "run the component ablation grid");
  ablate_f.add_data(ablate);
  ablate_f.add_sampler(ablate);

  std::string vital_metric = "we";
  int top_k = 2;
  bool all_layers = true;
  auto* vital = app.add_subcommand("vital", "per-layer temporal-consistency sensitivity");
  vital_f.add_data(vital);
  vital_f.add_sampler(vital);
  vital->add_option("--metric", vital_metric, "we | fsim")->capture_default_str();
  vital->add_option("--top-k", top_k, "number of layers to recommend")->capture_default_str();
  vital->add_option("--all-layers", all_layers, "start from every layer vital")->capture_default_str();

  std::string m_restored, m_reference, m_flows, m_out, m_sequence = "video", m_method = "unknown", m_task = "unknown";
  std::uint64_t m_seed = 0;
  int m_block = 8, m_radius = 4;
  auto* metrics = app.add_subcommand("metrics", "score a restored video against a reference");
  metrics->add_option("--restored", m_restored)->required();
  metrics->add_option("--reference", m_reference)->required();
  metrics->add_option("--flows", m_flows, "flow directory; estimated on the reference when omitted");
  metrics->add_option("--out", m_out, "CSV path");
  metrics->add_option("--sequence", m_sequence)->capture_default_str();
  metrics->add_option("--method", m_method)->capture_default_str();
  metrics->add_option("--task", m_task)->capture_default_str();
  metrics->add_option("--seed", m_seed)->capture_default_str();
  metrics->add_option("--block", m_block)->capture_default_str();
  metrics->add_option("--radius", m_radius)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(gen_f);
    if (*flow) return cmd_flow(flow_in, flow_out, flow_block, flow_radius);
    if (*restore) return cmd_restore(restore_f, restore_in, restore_flows, restore_weights);
    if (*ablate) return cmd_ablate(ablate_f);
    if (*vital) return cmd_vital(vital_f, vital_metric, top_k, all_layers);
    if (*metrics)
      return cmd_metrics(m_restored, m_reference, m_flows, m_out, m_sequence, m_method, m_task, m_seed, m_block,
                         m_radius);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
