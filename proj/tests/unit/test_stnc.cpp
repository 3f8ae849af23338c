#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "ditvr/flow.hpp"
#include "ditvr/stnc.hpp"

using namespace ditvr;

TEST_CASE("block partition") {
  const BlockGrid a = partition_blocks(8, 8, 4);
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 2);
  CHECK(a.pad_bottom() == 0);
  CHECK(partition_blocks(8, 8, 8).block_count() == 1);
  const BlockGrid c = partition_blocks(10, 10, 4);
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 3);
  CHECK(c.pad_bottom() == 2);
  CHECK(c.pad_right() == 2);
  CHECK(c.extent({2, 2}).count() == 4);
  CHECK(c.extent({0, 2}).count() == 8);
  int covered = 0;
  for (auto b : c.blocks()) covered += c.extent(b).count();
  CHECK(covered == 100);
  CHECK(c.block_of(9, 5) == BlockIndex{2, 1});
  CHECK_THROWS(partition_blocks(8, 8, 0));
  CHECK_THROWS(c.extent({3, 0}));
}

TEST_CASE("spatial neighbors") {
  const BlockGrid g(12, 12, 4);
  CHECK(spatial_neighbors(g, {0, 0}).empty());
  CHECK(spatial_neighbors(g, {0, 2}) == std::vector<BlockIndex>{{0, 1}});
  CHECK(spatial_neighbors(g, {2, 0}) == std::vector<BlockIndex>{{1, 0}});
  CHECK(spatial_neighbors(g, {1, 1}) == std::vector<BlockIndex>{{1, 0}, {0, 1}});
  CHECK_THROWS(spatial_neighbors(g, {3, 3}));
}

TEST_CASE("temporal neighbor") {
  const BlockGrid g(16, 16, 4);
  for (auto b : g.blocks()) CHECK(temporal_neighbor(g, b, FlowField(16, 16)) == b);
  // One block width to the left.
  const FlowField left(16, 16, -4.0, 0.0);
  CHECK(temporal_neighbor(g, {1, 2}, left) == BlockIndex{1, 1});
  CHECK_FALSE(temporal_neighbor(g, {1, 0}, left).has_value());
  // Half a block: pixels split 2/2, the tie goes to the smaller index.
  CHECK(temporal_neighbor(g, {1, 2}, FlowField(16, 16, -2.0, 0.0)) == BlockIndex{1, 1});
  CHECK(temporal_neighbors(g, {1, 2}, FlowField(16, 16, -1.0, 0.0), 2) == std::vector<BlockIndex>{{1, 2}, {1, 1}});
  CHECK_THROWS(temporal_neighbor(g, {0, 0}, FlowField(8, 8)));
}

TEST_CASE("temporal neighbor matches brute force counting on random flows") {
  const BlockGrid g(12, 12, 4);
  for (int s = 0; s < 5; ++s) {
    const FlowField fl = testutil::random_flow(12, 12, 5.0, 300 + s);
    for (auto b : g.blocks()) {
      std::vector<int> hist(9, 0);
      for (int y = 4 * b.p; y < 4 * b.p + 4; ++y)
        for (int x = 4 * b.q; x < 4 * b.q + 4; ++x) {
          const double tx = std::floor(x + fl.du(y, x) + 0.5), ty = std::floor(y + fl.dv(y, x) + 0.5);
          if (tx < 0 || ty < 0 || tx > 11 || ty > 11) continue;
          ++hist[static_cast<int>(ty) / 4 * 3 + static_cast<int>(tx) / 4];
        }
      const int best = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
      const auto got = temporal_neighbor(g, b, fl);
      if (hist[best] == 0) {
        CHECK_FALSE(got.has_value());
      } else {
        REQUIRE(got.has_value());
        CHECK(got->p * 3 + got->q == best);
      }
    }
  }
}

TEST_CASE("KV cache") {
  auto slab = [](int rows, double v) { return Eigen::MatrixXd::Constant(rows, 3, v); };
  SUBCASE("horizon 1 keeps only the newest frame") {
    KVCache c(1);
    c.insert(0, 0, {0, 0}, slab(2, 1), slab(2, 1));
    c.insert(0, 1, {0, 0}, slab(2, 2), slab(2, 2));
    CHECK(c.frames(0) == std::vector<int>{1});
    CHECK_FALSE(c.contains(0, 0, {0, 0}));
  }
  SUBCASE("horizon 3 and per-layer eviction") {
    KVCache c(3, 2);
    for (int f = 0; f < 5; ++f) {
      c.insert(0, f, {0, 0}, slab(1, f), slab(1, f));
      c.insert(0, f, {0, 1}, slab(1, f), slab(1, f));
    }
    c.insert(1, 0, {0, 0}, slab(1, 0), slab(1, 0));
    CHECK(c.frames(0) == std::vector<int>{2, 3, 4});
    CHECK(c.entries(0) == 6);
    CHECK(c.frames(1) == std::vector<int>{0});
    CHECK(c.total_entries() == 7);
  }
  SUBCASE("gather preserves reference order") {
    KVCache c(2);
    c.insert(0, 0, {0, 0}, slab(1, 1), slab(1, -1));
    c.insert(0, 0, {0, 1}, slab(2, 2), slab(2, -2));
    const std::vector<CacheRef> refs{{0, {0, 1}}, {0, {0, 0}}};
    const auto [k, v] = c.gather(0, refs);
    CHECK(k.rows() == 3);
    CHECK(k(0, 0) == 2);
    CHECK(k(2, 0) == 1);
    CHECK(v(2, 0) == -1);
    const std::vector<CacheRef> miss{{0, {1, 1}}};
    CHECK_THROWS_WITH(c.gather(0, miss), doctest::Contains("frame 0, block (1,1)"));
  }
  SUBCASE("occupancy csv") {
    KVCache c(2);
    c.insert(2, 5, {1, 0}, slab(4, 0), slab(4, 0));
    std::ostringstream os;
    c.write_occupancy_csv(os);
    CHECK(os.str() == "layer,frame,block,token_count\n2,5,1:0,4\n");
  }
  CHECK_THROWS(KVCache(0));
  CHECK_THROWS(KVCache(1).insert(0, 0, {0, 0}, slab(1, 0), slab(2, 0)));
}
