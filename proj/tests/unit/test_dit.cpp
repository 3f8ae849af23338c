#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "ditvr/attention.hpp"
#include "ditvr/dit.hpp"
#include "ditvr/schedule.hpp"
#include "ditvr/wavelet.hpp"

using namespace ditvr;
using testutil::random_frame;

namespace {

DiTConfig small_config() {
  DiTConfig cfg;
  cfg.num_layers = 3;
  cfg.vital_layers = {1};
  cfg.hidden_dim = 24;
  cfg.patch_size = 2;
  cfg.block_size = 2;
  cfg.init_scale = 0.05;
  return cfg;
}

Eigen::MatrixXd dense_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v) {
  Eigen::MatrixXd logits = q * k.transpose() / std::sqrt(double(q.cols()));
  Eigen::MatrixXd out(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()) * v;
  }
  return out;
}

}  // namespace

TEST_CASE("softmax and attention primitives") {
  const Eigen::MatrixXd l = Eigen::MatrixXd::Random(4, 6) * 50.0;
  const Eigen::MatrixXd s = softmax_rows(l);
  CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(s.minCoeff() >= 0.0);
  Eigen::Index a, b;
  for (int r = 0; r < 4; ++r) {
    l.row(r).maxCoeff(&a);
    s.row(r).maxCoeff(&b);
    CHECK(a == b);
  }
  const Eigen::MatrixXd q = Eigen::MatrixXd::Random(3, 8), k = Eigen::MatrixXd::Random(5, 8),
                        v = Eigen::MatrixXd::Random(5, 8);
  CHECK((scaled_dot_product_attention(q, k, v) - dense_attention(q, k, v)).cwiseAbs().maxCoeff() < 1e-12);
  // Two heads equal two independent half-width attentions.
  const Eigen::MatrixXd two = scaled_dot_product_attention(q, k, v, 2);
  CHECK((two.leftCols(4) - dense_attention(q.leftCols(4), k.leftCols(4), v.leftCols(4))).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK_THROWS(scaled_dot_product_attention(q, k, v, 3));
  CHECK_THROWS(scaled_dot_product_attention(q, k.topRows(0), v.topRows(0)));
}

TEST_CASE("config validation and json round trip") {
  DiTConfig cfg = small_config();
  cfg.seed = 77;
  cfg.trajectory_sharpness = 1.5;
  const DiTConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(back.vital_layers == cfg.vital_layers);
  const DiTConfig over = config_from_json(R"({"num_layers": 9})", cfg);
  CHECK(over.num_layers == 9);
  CHECK(over.hidden_dim == 24);
  CHECK(DiTConfig::every_third_layer(9) == std::set<int>{2, 5, 8});
  DiTConfig bad = cfg;
  bad.vital_layers = {7};
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.hidden_dim = 3;
  CHECK_THROWS(DiTModel{bad});
}

TEST_CASE("patch embedding") {
  const DiTModel m(small_config());
  const Frame f = random_frame(1, 7, 8, 3);
  const HiddenStates h = patch_embed(f, m);
  CHECK(h.rows == 4);
  CHECK(h.cols == 4);
  CHECK(h.tokens.rows() == 16);
  CHECK(h.tokens.cols() == 24);
  CHECK(patch_embed(f, m).tokens == h.tokens);
  // Content round trip through embedding and unembedding is close to identity.
  const DiTModel exact([] {
    DiTConfig c = small_config();
    c.init_scale = 0.0;
    return c;
  }());
  const Frame g = random_frame(1, 8, 8, 4);
  CHECK(max_abs_diff(unpatchify(patch_embed(g, exact), exact, 8, 8), g) < 1e-12);
}

TEST_CASE("block attention over a single block equals dense attention") {
  DiTConfig cfg = small_config();
  cfg.block_size = 4;
  const DiTModel m(cfg);
  const HiddenStates h = patch_embed(random_frame(1, 8, 8, 5), m);
  const BlockGrid grid(h.rows, h.cols, cfg.block_size);
  REQUIRE(grid.block_count() == 1);
  KVCache cache(2);
  cache_layer_kv(h, 0, 0, grid, m, cache);
  const HiddenStates out = block_attention(h, 0, 0, cache, grid, nullptr, m);
  const auto& w = m.layer(0);
  const Eigen::MatrixXd k = (h.tokens * w.wk).rowwise() + m.encodings().self * w.wk;
  const Eigen::MatrixXd want = dense_attention(h.tokens * w.wq, k, h.tokens * w.wv);
  CHECK((out.tokens - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("block attention with neighbours matches a cache-free oracle") {
  const DiTConfig cfg = small_config();
  const DiTModel m(cfg);
  const HiddenStates h0 = patch_embed(random_frame(1, 8, 8, 6), m);
  const HiddenStates h1 = patch_embed(random_frame(1, 8, 8, 7), m);
  const BlockGrid grid(h1.rows, h1.cols, cfg.block_size);
  KVCache cache(2);
  cache_layer_kv(h0, 0, 0, grid, m, cache);
  cache_layer_kv(h1, 0, 1, grid, m, cache);
  const FlowField left(h1.rows, h1.cols, -2.0, 0.0);  // one block to the left
  AttentionTrace trace;
  const HiddenStates out = block_attention(h1, 0, 1, cache, grid, &left, m, {}, &trace);
  const auto& w = m.layer(0);
  const auto& e = m.encodings();
  const BlockIndex b{1, 1};
  std::vector<std::pair<const HiddenStates*, std::pair<BlockIndex, Eigen::RowVectorXd>>> parts{
      {&h1, {b, e.self}}, {&h1, {{1, 0}, e.spatial}}, {&h1, {{0, 1}, e.spatial}}, {&h0, {{1, 0}, e.temporal}}};
  Eigen::MatrixXd k(16, 24), v(16, 24);
  int row = 0;
  for (const auto& [hs, ref] : parts) {
    const Eigen::MatrixXd r = block_rows(*hs, grid, ref.first);
    k.middleRows(row, 4) = (r * w.wk).rowwise() + ref.second * w.wk;
    v.middleRows(row, 4) = r * w.wv;
    row += 4;
  }
  const Eigen::MatrixXd want = dense_attention(block_rows(h1, grid, b) * w.wq, k, v);
  CHECK((block_rows(out, grid, b) - want).cwiseAbs().maxCoeff() < 1e-12);
  const auto& bt = trace.blocks.at(3);
  CHECK(bt.block == b);
  CHECK(bt.sources.size() == 16);
  CHECK(bt.sources.back() == KeySource::Temporal);
  CHECK((bt.weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  KVCache empty(2);
  CHECK_THROWS(block_attention(h1, 0, 1, empty, grid, &left, m));
}

TEST_CASE("identical temporal and self encodings give identical weights") {
  DiTModel m(small_config());
  m.encodings().temporal = m.encodings().self;
  const HiddenStates h = patch_embed(random_frame(1, 8, 8, 8), m);
  const BlockGrid grid(h.rows, h.cols, 2);
  KVCache cache(2);
  cache_layer_kv(h, 0, 0, grid, m, cache);
  cache_layer_kv(h, 0, 1, grid, m, cache);
  AttentionTrace trace;
  const FlowField zero(h.rows, h.cols);
  block_attention(h, 0, 1, cache, grid, &zero, m, {false, 1}, &trace);
  for (const auto& bt : trace.blocks) {
    REQUIRE(bt.weights.cols() == 8);
    CHECK((bt.weights.leftCols(4) - bt.weights.rightCols(4)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("trajectory cross-attention") {
  const DiTConfig cfg = small_config();
  const DiTModel m(cfg);
  const HiddenStates h = patch_embed(random_frame(1, 8, 8, 9), m);
  const BlockGrid grid(h.rows, h.cols, 2);
  KVCache cache(cfg.cache_horizon());
  SUBCASE("sentinel-only chains reduce to the FFN of the own value") {
    TrajectorySet t = build_trajectories({FlowField(4, 4, 9, 0)}, {FlowField(4, 4)}, all_pixels(4, 4), 1, 1, -1);
    t.height = t.width = 4;
    const HiddenStates out = trajectory_cross_attention(h, 1, 1, t, cache, 2, m);
    HiddenStates v = h;
    v.tokens = h.tokens * m.layer(1).wv;
    CHECK((out.tokens - apply_ffn(v, 1, m).tokens).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("static chains attend to the previous frame") {
    HiddenStates prev = patch_embed(random_frame(1, 8, 8, 10), m);
    cache_layer_kv(prev, 1, 0, grid, m, cache);
    TrajectorySet t = build_trajectories({FlowField(4, 4)}, {FlowField(4, 4)}, all_pixels(4, 4), 1, 1, -1);
    t.height = t.width = 4;
    const HiddenStates out = trajectory_cross_attention(h, 1, 1, t, cache, 1, m);
    const auto& w = m.layer(1);
    HiddenStates want = h;
    for (int i = 0; i < 16; ++i) {
      Eigen::MatrixXd k(2, 24), v(2, 24);
      k << h.tokens.row(i) * w.wk, prev.tokens.row(i) * w.wk;
      v << h.tokens.row(i) * w.wv, prev.tokens.row(i) * w.wv;
      want.tokens.row(i) = dense_attention(h.tokens.row(i) * w.wq_traj, k, v);
    }
    CHECK((out.tokens - apply_ffn(want, 1, m).tokens).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(trajectory_cross_attention(h, 1, 2, t, cache, 1, m));
  }
  SUBCASE("a missing trajectory slab is reported") {
    TrajectorySet t = build_trajectories({FlowField(4, 4)}, {FlowField(4, 4)}, all_pixels(4, 4), 1, 1, -1);
    t.height = t.width = 4;
    CHECK_THROWS_WITH(trajectory_cross_attention(h, 1, 1, t, cache, 1, m), doctest::Contains("missing trajectory"));
  }
}

TEST_CASE("weights round trip") {
  const DiTModel a(small_config());
  const auto path = std::filesystem::temp_directory_path() / "ditvr_weights.bin";
  a.save_weights(path);
  DiTConfig other = small_config();
  other.seed = 99;
  DiTModel b(other);
  CHECK_FALSE(b.same_weights(a));
  b.load_weights(path);
  CHECK(b.same_weights(a));
  CHECK(b.config().seed == a.config().seed);
  DiTModel c(small_config());
  c.layer(0).wq(0, 0) += 1.0;
  c.load_weights(path);
  CHECK(c.same_weights(a));
  DiTConfig wide = small_config();
  wide.hidden_dim = 32;
  DiTModel d(wide);
  CHECK_THROWS(d.load_weights(path));
}

TEST_CASE("prior shrinkage per band") {
  DiTConfig cfg;
  cfg.prior_levels = 2;
  const double ab = 0.3;
  auto gain = [ab](double s) { return ab * s * s / (ab * s * s + 1 - ab); };
  // Finest-scale HH pattern.
  Frame hh(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) hh(0, y, x) = ((x + y) % 2) ? -1.0 : 1.0;
  CHECK(max_abs_diff(prior_shrink(hh, ab, cfg), gain(cfg.prior_detail_std) * hh) < 1e-12);
  // Second-level pattern (2x2 cells).
  Frame lv2(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) lv2(0, y, x) = ((x / 2 + y / 2) % 2) ? -1.0 : 1.0;
  CHECK(max_abs_diff(prior_shrink(lv2, ab, cfg), gain(cfg.prior_detail_std * cfg.prior_detail_growth) * lv2) < 1e-12);
  const Frame flat(1, 8, 8, 0.7);
  CHECK(max_abs_diff(prior_shrink(flat, ab, cfg), gain(cfg.prior_std * 4) * flat) < 1e-12);
  // Linear and contracting.
  const Frame a = random_frame(1, 8, 8, 11, -1, 1), b = random_frame(1, 8, 8, 12, -1, 1);
  CHECK(max_abs_diff(prior_shrink(a + b, ab, cfg), prior_shrink(a, ab, cfg) + prior_shrink(b, ab, cfg)) < 1e-12);
  CHECK(squared_norm(prior_shrink(a, ab, cfg)) <= squared_norm(a));
}

TEST_CASE("denoise_predict") {
  const DiTModel m(small_config());
  const auto sched = make_schedule(1000, ScheduleKind::Linear);
  const Frame x = random_frame(1, 8, 8, 13);
  DenoiseContext ctx;
  const Frame e1 = denoise_predict(x, 500, sched, ctx, m);
  DenoiseContext ctx2;
  const Frame e2 = denoise_predict(x, 500, sched, ctx2, m);
  CHECK(e1 == e2);
  CHECK(e1.same_shape(x));
  CHECK_THROWS(denoise_predict(x, 1000, sched, ctx, m));
  CHECK_THROWS(denoise_predict(x, -1, sched, ctx, m));
}

TEST_CASE("without vital layers the body is block local") {
  DiTConfig cfg = small_config();
  cfg.vital_layers = {};
  const DiTModel m(cfg);
  Frame a = random_frame(1, 16, 16, 14);
  Frame b = a;
  b(0, 0, 0) += 0.5;  // token (0,0) -> block (0,0), pixels [0,4)^2
  DenoiseContext ca, cb;
  const Frame za = transformer_forward(a, ca, m), zb = transformer_forward(b, cb, m);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (y >= 4 || x >= 4) CHECK(za(0, y, x) == zb(0, y, x));
  CHECK(za(0, 0, 0) != zb(0, 0, 0));
}
