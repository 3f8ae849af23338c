#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "ditvr/flow.hpp"
#include "ditvr/image_ops.hpp"

using namespace ditvr;
using testutil::random_flow;
using testutil::random_frame;

namespace {

// Exhaustive SAD search written independently of the library loop order.
FlowField sad_oracle(const Frame& a, const Frame& b, int block, int radius) {
  const int h = a.height(), w = a.width();
  FlowField out(h, w);
  for (int by = 0; by < h; by += block)
    for (int bx = 0; bx < w; bx += block) {
      struct Cand {
        double sad;
        int mag, du, dv;
      };
      std::vector<Cand> cands;
      for (int du = -radius; du <= radius; ++du)
        for (int dv = -radius; dv <= radius; ++dv) {
          double sad = 0;
          for (int y = by; y < std::min(by + block, h); ++y)
            for (int x = bx; x < std::min(bx + block, w); ++x)
              for (int c = 0; c < a.channels(); ++c) {
                const int sy = std::max(0, std::min(h - 1, y + dv));
                const int sx = std::max(0, std::min(w - 1, x + du));
                sad += std::abs(a(c, y, x) - b(c, sy, sx));
              }
          cands.push_back({sad, du * du + dv * dv, du, dv});
        }
      const Cand best = *std::min_element(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) {
        return std::tie(l.sad, l.mag, l.du, l.dv) < std::tie(r.sad, r.mag, r.du, r.dv);
      });
      for (int y = by; y < std::min(by + block, h); ++y)
        for (int x = bx; x < std::min(bx + block, w); ++x) {
          out.du(y, x) = best.du;
          out.dv(y, x) = best.dv;
        }
    }
  return out;
}

Frame shift(const Frame& f, int du, int dv) {
  Frame out(f.channels(), f.height(), f.width());
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      out(0, y, x) = f(0, std::clamp(y - dv, 0, f.height() - 1), std::clamp(x - du, 0, f.width() - 1));
  return out;
}

}  // namespace

TEST_CASE("block matching: identical frames give zero flow") {
  const Frame f = random_frame(1, 16, 16, 1);
  const FlowField fl = estimate_flow_block_matching(f, f, 4, 3);
  CHECK(fl.du.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fl.dv.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("block matching recovers a shift on interior blocks") {
  const Frame a = random_frame(1, 32, 32, 2);
  const Frame b = shift(a, 3, 0);
  const FlowField fl = estimate_flow_block_matching(a, b, 8, 4);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      CHECK(fl.du(y, x) == 3.0);
      CHECK(fl.dv(y, x) == 0.0);
    }
}

TEST_CASE("block matching equals exhaustive SAD oracle") {
  int seed = 0;
  for (int block : {1, 2, 4})
    for (int radius : {0, 1, 2, 3}) {
      const Frame a = random_frame(1, 16, 16, 100 + seed);
      const Frame b = random_frame(1, 16, 16, 200 + seed++);
      const FlowField got = estimate_flow_block_matching(a, b, block, radius);
      const FlowField want = sad_oracle(a, b, block, radius);
      CHECK(got.du == want.du);
      CHECK(got.dv == want.dv);
      CHECK(got.du.cwiseAbs().maxCoeff() <= radius);
    }
  CHECK_THROWS(estimate_flow_block_matching(Frame(1, 4, 4), Frame(1, 4, 5), 2, 1));
}

TEST_CASE("ties prefer the smallest displacement") {
  const Frame flat(1, 8, 8, 0.5);
  const FlowField fl = estimate_flow_block_matching(flat, flat, 4, 2);
  CHECK(fl.du.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("downsample_flow") {
  const FlowField f = random_flow(8, 8, 3.0, 4);
  const FlowField same = downsample_flow(f, 1);
  CHECK(same.du == f.du);
  const FlowField four = downsample_flow(FlowField(8, 8, 4.0, 0.0), 4);
  CHECK(four.du(1, 1) == 1.0);
  CHECK(four.dv(0, 0) == 0.0);
  const FlowField two = downsample_flow(f, 2);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double m = (f.du(2 * y, 2 * x) + f.du(2 * y, 2 * x + 1) + f.du(2 * y + 1, 2 * x) + f.du(2 * y + 1, 2 * x + 1)) / 4;
      CHECK(two.du(y, x) == doctest::Approx(m / 2).epsilon(1e-14));
    }
  CHECK_THROWS(downsample_flow(FlowField(6, 8), 4));
}

TEST_CASE("forward_map") {
  const MappedPoint z = forward_map(3, 2, FlowField(5, 5));
  CHECK(z.ui == 3);
  CHECK(z.vi == 2);
  const MappedPoint m = forward_map(2, 2, FlowField(5, 5, 1.0, -1.0));
  CHECK(m.ui == 3);
  CHECK(m.vi == 1);
  // du(x, y) = x: at x = 2.5 the bilinear value is 2.5, so u' = 5.0.
  FlowField ramp(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp.du(y, x) = x;
  const MappedPoint r = forward_map(2.5, 2.0, ramp);
  CHECK(r.u == doctest::Approx(5.0));
  CHECK(r.ui == 5);
  CHECK_FALSE(forward_map(4, 4, FlowField(5, 5, 1.0, 0.0)).in_bounds);
}

TEST_CASE("trajectories") {
  const auto starts = all_pixels(6, 6);
  SUBCASE("zero flow keeps every chain in place") {
    const auto t = build_trajectories({FlowField(6, 6), FlowField(6, 6)}, {FlowField(6, 6), FlowField(6, 6)}, starts);
    for (std::size_t i = 0; i < starts.size(); ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(t.chains[i][k].u == starts[i].u);
        CHECK(t.chains[i][k].frame == static_cast<int>(k));
      }
  }
  SUBCASE("mutually inverse translation advances exactly") {
    const auto t = build_trajectories({FlowField(6, 6, 2, 0)}, {FlowField(6, 6, -2, 0)}, starts);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      if (starts[i].u + 2 < 6) {
        CHECK(t.chains[i][1] == TrajectoryPoint{1, starts[i].u + 2, starts[i].v});
      } else {
        CHECK(t.chains[i][1].is_sentinel());
      }
    }
  }
  SUBCASE("inconsistent flows emit sentinels at the first step") {
    const auto t = build_trajectories({FlowField(6, 6, 2, 0)}, {FlowField(6, 6)}, starts);
    for (const auto& c : t.chains) CHECK(c[1].is_sentinel());
  }
  SUBCASE("sentinel is absorbing on random flows") {
    std::vector<FlowField> fwd, bwd;
    for (int i = 0; i < 5; ++i) {
      fwd.push_back(random_flow(6, 6, 1.5, 10 + i));
      bwd.push_back(random_flow(6, 6, 1.5, 20 + i));
    }
    const auto t = build_trajectories(fwd, bwd, starts);
    for (const auto& c : t.chains) {
      bool dead = false;
      for (const auto& p : c) {
        if (dead) CHECK(p.is_sentinel());
        dead = dead || p.is_sentinel();
        if (!p.is_sentinel()) CHECK((p.u >= 0 && p.u < 6 && p.v >= 0 && p.v < 6));
      }
    }
  }
  CHECK_THROWS(build_trajectories({FlowField(6, 6)}, {}, starts));
}

TEST_CASE("backward tracks follow the past") {
  std::vector<FlowField> fwd(3, FlowField(8, 8, 1, 0)), bwd(3, FlowField(8, 8, -1, 0));
  const auto tracks = backward_tracks(fwd, bwd, 2);
  REQUIRE(tracks.size() == 4);
  CHECK(tracks[0].steps() == 1);
  const auto& t3 = tracks[3];
  // pixel (5, 2) in frame 3 sits at (4, 2) in frame 2 and (3, 2) in frame 1.
  const auto& c = t3.chains[2 * 8 + 5];
  CHECK(c[0] == TrajectoryPoint{3, 5, 2});
  CHECK(c[1] == TrajectoryPoint{2, 4, 2});
  CHECK(c[2] == TrajectoryPoint{1, 3, 2});
}

TEST_CASE("occlusion mask") {
  CHECK(occlusion_mask(FlowField(5, 5, 1, 1), FlowField(5, 5, -1, -1), 0.0).all());
  CHECK(occlusion_mask(random_flow(5, 5, 2, 1), random_flow(5, 5, 2, 2)).all());
  // Occluder region: background moves right by 2 but the backward flow there is zero.
  FlowField fwd(8, 8, 2, 0), bwd(8, 8, -2, 0);
  for (int y = 2; y < 5; ++y)
    for (int x = 4; x < 7; ++x) bwd.du(y, x) = 0.0;
  const Mask m = occlusion_mask(fwd, bwd, 0.5);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const int tx = std::min(x + 2, 7);  // taps past the border read the edge
      CHECK(m(y, x) == (std::abs(2.0 + bwd.du(y, tx)) <= 0.5));
    }
}

TEST_CASE(".flo round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "ditvr_flo";
  std::filesystem::create_directories(dir);
  FlowField f = random_flow(5, 7, 3.0, 9);
  f.du = f.du.cast<float>().cast<double>();
  f.dv = f.dv.cast<float>().cast<double>();
  write_flo(dir / "a.flo", f);
  const FlowField g = read_flo(dir / "a.flo");
  CHECK(g.du == f.du);
  CHECK(g.dv == f.dv);
  write_flo(dir / "b.flo", g);
  std::ifstream a(dir / "a.flo", std::ios::binary), b(dir / "b.flo", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK(sa.substr(0, 4) == "PIEH");
  CHECK(sa.size() == 12 + 5 * 7 * 8);
}
