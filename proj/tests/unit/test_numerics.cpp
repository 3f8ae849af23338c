#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ditvr/image_io.hpp"
#include "ditvr/image_ops.hpp"

using namespace ditvr;
using testutil::random_frame;

TEST_CASE("tensor rejects bad shapes and non-finite data") {
  CHECK_THROWS(Tensor({2, 3}, Tensor::Vector::Zero(5)));
  Tensor::Vector v = Tensor::Vector::Zero(6);
  v(2) = std::nan("");
  CHECK_THROWS(Tensor({2, 3}, v));
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS(Frame(0, 4, 4));
  Plane p = Plane::Zero(2, 2);
  p(0, 0) = INFINITY;
  CHECK_THROWS(Frame(std::vector<Plane>{p}));
}

TEST_CASE("zero flow warp is the identity") {
  const Frame f = random_frame(3, 7, 9, 1);
  const auto r = bilinear_warp(f, FlowField(7, 9));
  CHECK(r.frame == f);
  CHECK(r.valid.all());
}

TEST_CASE("ramp warped by (+1, 0) shifts left with edge clamp") {
  Frame ramp(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp(0, y, x) = x;
  const auto r = bilinear_warp(ramp, FlowField(4, 4, 1.0, 0.0));
  for (int y = 0; y < 4; ++y) {
    CHECK(r.frame(0, y, 0) == 1.0);
    CHECK(r.frame(0, y, 1) == 2.0);
    CHECK(r.frame(0, y, 2) == 3.0);
    CHECK(r.frame(0, y, 3) == 3.0);
    CHECK(r.valid(y, 2));
    CHECK_FALSE(r.valid(y, 3));
  }
}

TEST_CASE("half-pixel warp interpolates") {
  Frame f(1, 1, 2);
  f(0, 0, 1) = 1.0;
  const auto r = bilinear_warp(f, FlowField(1, 2, 0.5, 0.0));
  CHECK(r.frame(0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("warp rejects mismatched flow") { CHECK_THROWS(bilinear_warp(Frame(1, 4, 4), FlowField(4, 5))); }

TEST_CASE("average pooling") {
  const Frame f = random_frame(1, 8, 8, 3);
  CHECK(avg_pool_downsample(f, 1) == f);
  Frame b(1, 2, 2);
  b(0, 1, 0) = b(0, 1, 1) = 1.0;
  CHECK(avg_pool_downsample(b, 2)(0, 0, 0) == 0.5);
  const Frame p = avg_pool_downsample(f, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) s += f(0, 4 * i + y, 4 * j + x);
      CHECK(p(0, i, j) == doctest::Approx(s / 16).epsilon(1e-14));
    }
  CHECK_THROWS(avg_pool_downsample(Frame(1, 6, 8), 4));
  CHECK_THROWS(avg_pool_downsample(f, 0));
}

TEST_CASE("pseudo inverse is a right inverse of pooling") {
  Frame one(1, 1, 1, 0.3);
  const Frame up = pseudo_inverse_upsample(one, 2);
  CHECK(up.height() == 2);
  CHECK(up(0, 1, 1) == 0.3);
  CHECK(avg_pool_downsample(up, 2)(0, 0, 0) == doctest::Approx(0.3).epsilon(1e-15));
  for (int s : {1, 2, 4}) {
    const Frame y = random_frame(3, 5, 4, 10 + s);
    CHECK(max_abs_diff(avg_pool_downsample(pseudo_inverse_upsample(y, s), s), y) <= 1e-12);
  }
}

TEST_CASE("gaussian noise") {
  const Frame f = random_frame(1, 8, 8, 4);
  CHECK(add_gaussian_noise(f, 0.0, 1) == f);
  CHECK_THROWS(add_gaussian_noise(f, -0.1, 1));
  CHECK(add_gaussian_noise(f, 0.2, 9) == add_gaussian_noise(f, 0.2, 9));
  CHECK_FALSE(add_gaussian_noise(f, 0.2, 9) == add_gaussian_noise(f, 0.2, 10));

  const double sigma = 50.0 / 255.0;
  const Frame c(1, 1000, 1000, 0.5);
  const Frame n = add_gaussian_noise(c, sigma, 77);
  const double mean = n.plane(0).mean();
  const double var = (n.plane(0).array() - mean).square().mean();
  CHECK(std::abs(std::sqrt(var) / sigma - 1.0) < 0.01);
  CHECK(n.plane(0).maxCoeff() > 1.0);  // not clamped
}

TEST_CASE("rng stream is fixed") {
  // First outputs of std::mt19937_64 seeded with 5489 are specified by the standard.
  Rng r(5489);
  CHECK(r.next_u64() == 14514284786278117030ull);
  Rng a(1), b(1);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
}

TEST_CASE("ppm round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "ditvr_ppm";
  std::filesystem::create_directories(dir);
  const Frame gray = random_frame(1, 5, 6, 2);
  write_ppm(dir / "g.ppm", gray);
  const Frame g2 = read_ppm(dir / "g.ppm");
  CHECK(g2.channels() == 1);
  CHECK(g2 == quantized(gray));
  const Frame rgb = random_frame(3, 4, 3, 5);
  write_ppm(dir / "c.ppm", rgb);
  CHECK(read_ppm(dir / "c.ppm") == quantized(rgb));
  CHECK(quantize8(-1.0) == 0);
  CHECK(quantize8(2.0) == 255);
  CHECK(quantize8(0.5) == 128);
}
