#include "ditvr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ditvr/image_ops.hpp"

namespace ditvr {

namespace {

void require_same(const Frame& a, const Frame& b, const char* who) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": frame shapes differ");
}

void require_pairs(const Video& video, const std::vector<FlowField>& flows, const std::vector<Mask>* masks,
                   const char* who) {
  if (video.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least two frames");
  if (flows.size() + 1 != video.size())
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(video.size() - 1) + " flows, got " +
                                std::to_string(flows.size()));
  if (masks && masks->size() != flows.size())
    throw std::invalid_argument(std::string(who) + ": one mask per frame pair required");
}

Mask pair_mask(const WarpResult<double>& warped, const std::vector<Mask>* masks, std::size_t f) {
  Mask m = warped.valid;
  if (masks) {
    const Mask& extra = (*masks)[f];
    if (extra.rows() != m.rows() || extra.cols() != m.cols())
      throw std::invalid_argument("occlusion mask dimensions differ from the frame");
    m = m && extra;
  }
  return m;
}

Plane gaussian_window() {
  constexpr int n = 11;
  constexpr double sigma = 1.5;
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) g(i) = std::exp(-((i - 5) * (i - 5)) / (2.0 * sigma * sigma));
  g /= g.sum();
  return g * g.transpose();
}

}  // namespace

double mse(const Frame& a, const Frame& b) {
  require_same(a, b, "mse");
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) sum += (a.plane(c) - b.plane(c)).squaredNorm();
  return sum / (static_cast<double>(a.channels()) * a.height() * a.width());
}

double psnr(const Frame& a, const Frame& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Frame& a, const Frame& b, double peak) {
  require_same(a, b, "ssim");
  constexpr int n = 11;
  if (a.height() < n || a.width() < n) throw std::invalid_argument("ssim: frame smaller than the 11x11 window");
  static const Plane window = gaussian_window();
  const Plane x = luma(a), y = luma(b);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  int count = 0;
  for (int i = 0; i + n <= x.rows(); ++i) {
    for (int j = 0; j + n <= x.cols(); ++j) {
      const auto px = x.block(i, j, n, n).array();
      const auto py = y.block(i, j, n, n).array();
      const auto w = window.array();
      const double mx = (w * px).sum(), my = (w * py).sum();
      const double vx = (w * px * px).sum() - mx * mx;
      const double vy = (w * py * py).sum() - my * my;
      const double cxy = (w * px * py).sum() - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

double warping_error(const Video& video, const std::vector<FlowField>& back_flows, const std::vector<Mask>* masks) {
  require_pairs(video, back_flows, masks, "warping_error");
  double total = 0.0;
  for (std::size_t f = 0; f + 1 < video.size(); ++f) {
    require_same(video[f], video[f + 1], "warping_error");
    const auto warped = bilinear_warp(video[f], back_flows[f]);
    const Mask m = pair_mask(warped, masks, f);
    double sum = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < video[f].channels(); ++c)
      for (int y = 0; y < m.rows(); ++y)
        for (int x = 0; x < m.cols(); ++x)
          if (m(y, x)) {
            const double d = video[f + 1](c, y, x) - warped.frame(c, y, x);
            sum += d * d;
            ++count;
          }
    total += count ? sum / static_cast<double>(count) : 0.0;
  }
  return 1000.0 * total / static_cast<double>(video.size() - 1);
}

double fsim_temporal(const Video& video, const std::vector<FlowField>& back_flows, const std::vector<Mask>* masks) {
  require_pairs(video, back_flows, masks, "fsim_temporal");
  double total = 0.0;
  for (std::size_t f = 0; f + 1 < video.size(); ++f) {
    require_same(video[f], video[f + 1], "fsim_temporal");
    const auto warped = bilinear_warp(video[f], back_flows[f]);
    const Mask m = pair_mask(warped, masks, f);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int c = 0; c < video[f].channels(); ++c)
      for (int y = 0; y < m.rows(); ++y)
        for (int x = 0; x < m.cols(); ++x)
          if (m(y, x)) {
            const double a = video[f + 1](c, y, x), b = warped.frame(c, y, x);
            dot += a * b;
            na += a * a;
            nb += b * b;
          }
    if (na == 0.0 || nb == 0.0)
      throw std::invalid_argument("fsim_temporal: zero-norm frame at pair " + std::to_string(f));
    total += dot / std::sqrt(na * nb);
  }
  return total / static_cast<double>(video.size() - 1);
}

double mean_psnr(const Video& a, const Video& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("mean_psnr: frame counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += psnr(a[i], b[i]);
  return s / static_cast<double>(a.size());
}

double mean_ssim(const Video& a, const Video& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("mean_ssim: frame counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += ssim(a[i], b[i]);
  return s / static_cast<double>(a.size());
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string csv_safe(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "sequence,method,task,PSNR,SSIM,WE_e3,FSim,seed,flow_source,error\n";
  for (const auto& r : rows) {
    out << r.sequence << ',' << r.method << ',' << r.task << ',' << format_metric(r.psnr) << ','
        << format_metric(r.ssim) << ',' << format_metric(r.we_e3) << ',' << format_metric(r.fsim) << ',' << r.seed
        << ',' << r.flow_source << ',' << csv_safe(r.error) << '\n';
  }
  return out.str();
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

}  // namespace ditvr
