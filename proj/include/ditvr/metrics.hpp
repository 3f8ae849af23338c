#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ditvr/flow_field.hpp"
#include "ditvr/tensor.hpp"

namespace ditvr {

// 10 log10(peak^2 / MSE); +inf for identical frames.
double psnr(const Frame& a, const Frame& b, double peak = 1.0);
double mse(const Frame& a, const Frame& b);

// Gaussian-window SSIM (11 x 11, sigma 1.5), mean over all fully contained
// windows. RGB frames are reduced to BT.601 luma first.
double ssim(const Frame& a, const Frame& b, double peak = 1.0);

// back_flows[f] maps frame f+1 to frame f, so that warping frame f through it
// aligns it with frame f+1. Pixels whose warp tap leaves the frame, or that
// are false in masks[f] when masks are given, are excluded.
// Mean over pairs of the masked MSE, times 1000.
double warping_error(const Video& video, const std::vector<FlowField>& back_flows,
                     const std::vector<Mask>* masks = nullptr);

// Mean over pairs of the cosine similarity between frame f+1 and warped frame
// f on the valid pixels.
double fsim_temporal(const Video& video, const std::vector<FlowField>& back_flows,
                     const std::vector<Mask>* masks = nullptr);

double mean_psnr(const Video& a, const Video& b);
double mean_ssim(const Video& a, const Video& b);

struct MetricRow {
  std::string sequence;
  std::string method;
  std::string task;
  double psnr = 0.0;
  double ssim = 0.0;
  double we_e3 = 0.0;
  double fsim = 0.0;
  std::uint64_t seed = 0;
  std::string flow_source;  // "gt" or "estimated"
  std::string error;        // non-empty when the run failed
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::vector<double>> per_frame_psnr;  // parallel to rows

  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

// Fixed formatting used for every floating value in reports ("%.6f", "inf").
std::string format_metric(double v);

}  // namespace ditvr
