#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ditvr/image_ops.hpp"
#include "ditvr/metrics.hpp"

using namespace ditvr;
using testutil::random_frame;

TEST_CASE("psnr") {
  const Frame a = random_frame(1, 16, 16, 1, 0.2, 0.8);
  CHECK(std::isinf(psnr(a, a)));
  const Frame b = map_planes(a, [](const Plane& p) -> Plane { return (p.array() + 0.1).matrix(); });
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  const Frame c = map_planes(a, [](const Plane& p) -> Plane { return (p.array() + 0.2).matrix(); });
  // Doubling the error costs 20 log10 2 dB.
  CHECK(psnr(a, b) - psnr(a, c) == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-12));
  CHECK(mse(a, b) == doctest::Approx(0.01));
  CHECK_THROWS(psnr(a, Frame(1, 8, 8)));
}

TEST_CASE("ssim") {
  const Frame a = random_frame(1, 24, 24, 2);
  const Frame b = random_frame(1, 24, 24, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(ssim(a, b) < 0.5);
  // Constant patches: (2 m1 m2 + C1)(C2) / ((m1^2 + m2^2 + C1)(C2)).
  const double k = (2 * 0.25 * 0.75 + 1e-4) / (0.25 * 0.25 + 0.75 * 0.75 + 1e-4);
  CHECK(k == doctest::Approx(0.6000639897616381).epsilon(1e-14));
  CHECK(ssim(Frame(1, 16, 16, 0.25), Frame(1, 16, 16, 0.75)) == doctest::Approx(k).epsilon(1e-12));
  CHECK_THROWS(ssim(Frame(1, 10, 10), Frame(1, 10, 10)));
}

TEST_CASE("warping error") {
  const Frame f = random_frame(1, 16, 16, 4);
  const Video stat{f, f, f};
  const std::vector<FlowField> zero(2, FlowField(16, 16));
  CHECK(warping_error(stat, zero) == 0.0);
  // Content moving right by 2: frame f+1 at x equals frame f at x-2.
  Video moving{f};
  Frame g(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) g(0, y, x) = f(0, y, std::max(0, x - 2));
  moving.push_back(g);
  const std::vector<FlowField> exact{FlowField(16, 16, -2.0, 0.0)};
  CHECK(warping_error(moving, exact) < 1e-20);
  // Zero flow gives the plain frame-difference MSE.
  double want = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) want += std::pow(g(0, y, x) - f(0, y, x), 2);
  CHECK(warping_error(moving, {FlowField(16, 16)}) == doctest::Approx(1000 * want / 256).epsilon(1e-12));
  std::vector<Mask> masks{Mask::Constant(16, 16, false)};
  masks[0](3, 3) = true;
  CHECK(warping_error(moving, {FlowField(16, 16)}, &masks) ==
        doctest::Approx(1000 * std::pow(g(0, 3, 3) - f(0, 3, 3), 2)).epsilon(1e-12));
  CHECK_THROWS(warping_error(moving, zero));
}

TEST_CASE("temporal feature similarity") {
  const Frame f = random_frame(1, 16, 16, 5, 0.1, 1.0);
  CHECK(fsim_temporal({f, f}, {FlowField(16, 16)}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fsim_temporal({f, -1.0 * f}, {FlowField(16, 16)}) == doctest::Approx(-1.0).epsilon(1e-14));
  const Frame g = random_frame(1, 16, 16, 6, 0.1, 1.0);
  const Eigen::VectorXd a = f.flatten(), b = g.flatten();
  CHECK(fsim_temporal({f, g}, {FlowField(16, 16)}) == doctest::Approx(a.dot(b) / a.norm() / b.norm()).epsilon(1e-13));
}

TEST_CASE("metric csv") {
  MetricReport r;
  r.rows.push_back({"perlin-translate", "ditvr", "sr4", 30.5, 0.9, 1.25, 0.99, 3, "gt", ""});
  r.rows.push_back({"x", "per-frame", "sr4", INFINITY, NAN, 0, 0, 0, "estimated", "bad, thing\nhere"});
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("sequence,method,task,PSNR,SSIM,WE_e3,FSim,seed,flow_source,error\n", 0) == 0);
  CHECK(csv.find("perlin-translate,ditvr,sr4,30.500000,0.900000,1.250000,0.990000,3,gt,\n") != std::string::npos);
  CHECK(csv.find("inf,nan") != std::string::npos);
  CHECK(csv.find("bad; thing;here") != std::string::npos);
  CHECK(format_metric(1.0 / 3) == "0.333333");
}
