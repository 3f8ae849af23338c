#include "ditvr/dit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "ditvr/attention.hpp"
#include "ditvr/rng.hpp"
#include "ditvr/wavelet.hpp"

namespace ditvr {

void DiTConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("DiTConfig: " + what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (patch_size < 1) fail("patch_size must be >= 1");
  if (block_size < 1) fail("block_size must be >= 1");
  if (heads < 1 || hidden_dim % heads != 0) fail("hidden_dim must be divisible by heads");
  if (hidden_dim < content_dim())
    fail("hidden_dim " + std::to_string(hidden_dim) + " smaller than patch content " + std::to_string(content_dim()));
  for (int l : vital_layers)
    if (l < 0 || l >= num_layers) fail("vital layer " + std::to_string(l) + " out of range");
  if (stnc_neighbors < 0) fail("stnc_neighbors must be >= 0");
  if (trajectory_window < 1) fail("trajectory_window must be >= 1");
  if (!(encoding_scale > 0.0)) fail("encoding_scale must be > 0 so provenance encodings differ");
  if (!(prior_std > 0.0)) fail("prior_std must be > 0");
  if (prior_levels < 0) fail("prior_levels must be >= 0");
  if (!(prior_detail_std > 0.0) || !(prior_detail_growth > 0.0)) fail("prior detail scales must be > 0");
  if (!(init_scale >= 0.0) || !(attention_sharpness >= 0.0) || !(trajectory_sharpness >= 0.0)) fail("scales must be non-negative");
}

std::set<int> DiTConfig::every_third_layer(int num_layers) {
  std::set<int> out;
  for (int l = 2; l < num_layers; l += 3) out.insert(l);
  return out;
}

std::string config_to_json(const DiTConfig& cfg) {
  nlohmann::ordered_json j;
  j["num_layers"] = cfg.num_layers;
  j["hidden_dim"] = cfg.hidden_dim;
  j["heads"] = cfg.heads;
  j["patch_size"] = cfg.patch_size;
  j["block_size"] = cfg.block_size;
  j["channels"] = cfg.channels;
  j["vital_layers"] = std::vector<int>(cfg.vital_layers.begin(), cfg.vital_layers.end());
  j["seed"] = cfg.seed;
  j["trajectory_attention"] = cfg.trajectory_attention;
  j["stnc_neighbors"] = cfg.stnc_neighbors;
  j["trajectory_window"] = cfg.trajectory_window;
  j["separate_trajectory_query"] = cfg.separate_trajectory_query;
  j["init_scale"] = cfg.init_scale;
  j["attention_sharpness"] = cfg.attention_sharpness;
  j["trajectory_sharpness"] = cfg.trajectory_sharpness;
  j["encoding_scale"] = cfg.encoding_scale;
  j["prior_mean"] = cfg.prior_mean;
  j["prior_std"] = cfg.prior_std;
  j["prior_levels"] = cfg.prior_levels;
  j["prior_detail_std"] = cfg.prior_detail_std;
  j["prior_detail_growth"] = cfg.prior_detail_growth;
  return j.dump(2);
}

DiTConfig config_from_json(const std::string& text, DiTConfig cfg) {
  const auto j = nlohmann::json::parse(text);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("num_layers", cfg.num_layers);
  get("hidden_dim", cfg.hidden_dim);
  get("heads", cfg.heads);
  get("patch_size", cfg.patch_size);
  get("block_size", cfg.block_size);
  get("channels", cfg.channels);
  if (j.contains("vital_layers")) {
    const auto layers = j.at("vital_layers").get<std::vector<int>>();
    cfg.vital_layers = std::set<int>(layers.begin(), layers.end());
  }
  get("seed", cfg.seed);
  get("trajectory_attention", cfg.trajectory_attention);
  get("stnc_neighbors", cfg.stnc_neighbors);
  get("trajectory_window", cfg.trajectory_window);
  get("separate_trajectory_query", cfg.separate_trajectory_query);
  get("init_scale", cfg.init_scale);
  get("attention_sharpness", cfg.attention_sharpness);
  get("trajectory_sharpness", cfg.trajectory_sharpness);
  get("encoding_scale", cfg.encoding_scale);
  get("prior_mean", cfg.prior_mean);
  get("prior_std", cfg.prior_std);
  get("prior_levels", cfg.prior_levels);
  get("prior_detail_std", cfg.prior_detail_std);
  get("prior_detail_growth", cfg.prior_detail_growth);
  cfg.validate();
  return cfg;
}

void save_config(const std::filesystem::path& path, const DiTConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot open " + path.string());
  out << config_to_json(cfg) << '\n';
}

DiTConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path.string());
  return config_from_json(std::string(std::istreambuf_iterator<char>(in), {}));
}

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

Eigen::RowVectorXd gaussian_row(Rng& rng, Eigen::Index n, double scale) {
  return gaussian_matrix(rng, 1, n, scale).row(0);
}

}  // namespace

DiTModel::DiTModel(DiTConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int d = cfg_.hidden_dim;
  const int pc = cfg_.content_dim();
  const double s = cfg_.init_scale;
  Rng rng(mix_seed(cfg_.seed, 0));

  embed_ = Eigen::MatrixXd::Zero(pc, d);
  embed_.leftCols(pc).setIdentity();
  embed_ += gaussian_matrix(rng, pc, d, s);
  unembed_ = Eigen::MatrixXd::Zero(d, pc);
  unembed_.topRows(pc).setIdentity();
  unembed_ += gaussian_matrix(rng, d, pc, s);

  // Block queries read position dims only; trajectory queries read content
  // dims only. Keys carry both.
  Eigen::MatrixXd qk = Eigen::MatrixXd::Zero(d, d);
  qk.diagonal().tail(d - pc).setConstant(std::sqrt(cfg_.attention_sharpness));
  Eigen::MatrixXd key = qk;
  key.diagonal().head(pc).setConstant(std::sqrt(cfg_.trajectory_sharpness));
  Eigen::MatrixXd traj = Eigen::MatrixXd::Zero(d, d);
  traj.diagonal().head(pc).setConstant(std::sqrt(cfg_.trajectory_sharpness));

  layers_.resize(static_cast<std::size_t>(cfg_.num_layers));
  for (auto& w : layers_) {
    w.wq = qk + gaussian_matrix(rng, d, d, s);
    w.wk = key + gaussian_matrix(rng, d, d, s);
    w.wv = Eigen::MatrixXd::Identity(d, d) + gaussian_matrix(rng, d, d, s);
    w.wq_traj = traj + gaussian_matrix(rng, d, d, s);
    if (!cfg_.separate_trajectory_query) w.wq_traj = w.wq;
    w.w1 = gaussian_matrix(rng, d, 4 * d, s);
    w.b1 = Eigen::RowVectorXd::Zero(4 * d);
    w.w2 = gaussian_matrix(rng, 4 * d, d, s);
    w.b2 = Eigen::RowVectorXd::Zero(d);
  }

  enc_.self = Eigen::RowVectorXd::Zero(d);
  enc_.spatial = gaussian_row(rng, d, cfg_.encoding_scale);
  enc_.temporal = gaussian_row(rng, d, cfg_.encoding_scale);
}

Eigen::MatrixXd DiTModel::position_signal(int rows, int cols) const {
  const int d = cfg_.hidden_dim;
  const int pc = cfg_.content_dim();
  const int half = (d - pc) / 2;  // dims per axis
  const int freqs = half / 2;
  Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(Eigen::Index(rows) * cols, d);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Eigen::Index i = Eigen::Index(r) * cols + c;
      for (int k = 0; k < freqs; ++k) {
        const double omega = (std::numbers::pi / 2.0) / std::ldexp(1.0, k);
        pos(i, pc + 2 * k) = std::sin(omega * r);
        pos(i, pc + 2 * k + 1) = std::cos(omega * r);
        pos(i, pc + half + 2 * k) = std::sin(omega * c);
        pos(i, pc + half + 2 * k + 1) = std::cos(omega * c);
      }
    }
  }
  return pos;
}

std::vector<const Eigen::MatrixXd*> DiTModel::matrices() const {
  std::vector<const Eigen::MatrixXd*> out{&embed_, &unembed_};
  for (const auto& w : layers_) {
    out.push_back(&w.wq);
    out.push_back(&w.wk);
    out.push_back(&w.wv);
    out.push_back(&w.wq_traj);
    out.push_back(&w.w1);
    out.push_back(&w.w2);
  }
  return out;
}

std::vector<const Eigen::RowVectorXd*> DiTModel::vectors() const {
  std::vector<const Eigen::RowVectorXd*> out{&enc_.self, &enc_.spatial, &enc_.temporal};
  for (const auto& w : layers_) {
    out.push_back(&w.b1);
    out.push_back(&w.b2);
  }
  return out;
}

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("load_weights: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void DiTModel::save_weights(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path.string());
  out.write("DITW", 4);
  put<std::uint32_t>(out, kWeightsVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.num_layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.hidden_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.heads));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.patch_size));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.channels));
  put<std::uint64_t>(out, cfg_.seed);
  for (const auto* m : matrices())
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) put<double>(out, (*m)(i, j));
  for (const auto* v : vectors())
    for (Eigen::Index i = 0; i < v->size(); ++i) put<double>(out, (*v)(i));
  if (!out) throw std::runtime_error("save_weights: write failed for " + path.string());
}

void DiTModel::load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_weights: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DITW", 4) != 0) throw std::runtime_error("load_weights: bad magic");
  if (get<std::uint32_t>(in) != kWeightsVersion) throw std::runtime_error("load_weights: unsupported version");
  const auto layers = get<std::uint32_t>(in);
  const auto dim = get<std::uint32_t>(in);
  const auto heads = get<std::uint32_t>(in);
  const auto patch = get<std::uint32_t>(in);
  const auto channels = get<std::uint32_t>(in);
  const auto seed = get<std::uint64_t>(in);
  if (int(layers) != cfg_.num_layers || int(dim) != cfg_.hidden_dim || int(heads) != cfg_.heads ||
      int(patch) != cfg_.patch_size || int(channels) != cfg_.channels)
    throw std::runtime_error("load_weights: snapshot dimensions do not match the model config");
  cfg_.seed = seed;
  for (const auto* cm : matrices()) {
    auto* m = const_cast<Eigen::MatrixXd*>(cm);
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = get<double>(in);
  }
  for (const auto* cv : vectors()) {
    auto* v = const_cast<Eigen::RowVectorXd*>(cv);
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = get<double>(in);
  }
}

bool DiTModel::same_weights(const DiTModel& other) const {
  const auto a = matrices(), b = other.matrices();
  const auto va = vectors(), vb = other.vectors();
  if (a.size() != b.size() || va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols() || *a[i] != *b[i]) return false;
  for (std::size_t i = 0; i < va.size(); ++i)
    if (va[i]->size() != vb[i]->size() || *va[i] != *vb[i]) return false;
  return true;
}

HiddenStates patch_embed(const Frame& frame, const DiTModel& model) {
  const auto& cfg = model.config();
  const int p = cfg.patch_size;
  if (frame.channels() != cfg.channels)
    throw std::invalid_argument("patch_embed: frame has " + std::to_string(frame.channels()) +
                                " channels, model expects " + std::to_string(cfg.channels));
  if (frame.height() < p || frame.width() < p) throw std::invalid_argument("patch_embed: frame smaller than one patch");
  HiddenStates h;
  h.rows = (frame.height() + p - 1) / p;
  h.cols = (frame.width() + p - 1) / p;
  Eigen::MatrixXd patches(Eigen::Index(h.rows) * h.cols, cfg.content_dim());
  for (int r = 0; r < h.rows; ++r) {
    for (int c = 0; c < h.cols; ++c) {
      const Eigen::Index row = Eigen::Index(r) * h.cols + c;
      for (int ch = 0; ch < frame.channels(); ++ch)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j)
            patches(row, (ch * p + i) * p + j) =
                frame(ch, std::min(r * p + i, frame.height() - 1), std::min(c * p + j, frame.width() - 1));
    }
  }
  h.tokens = patches * model.embedding() + model.position_signal(h.rows, h.cols);
  return h;
}

Frame unpatchify(const HiddenStates& h, const DiTModel& model, int height, int width) {
  const auto& cfg = model.config();
  const int p = cfg.patch_size;
  if (h.rows * p < height || h.cols * p < width) throw std::invalid_argument("unpatchify: token grid too small");
  const Eigen::MatrixXd patches = h.tokens * model.unembedding();
  Frame out(cfg.channels, height, width);
  for (int r = 0; r < h.rows; ++r)
    for (int c = 0; c < h.cols; ++c)
      for (int ch = 0; ch < cfg.channels; ++ch)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) {
            const int y = r * p + i, x = c * p + j;
            if (y < height && x < width) out(ch, y, x) = patches(Eigen::Index(r) * h.cols + c, (ch * p + i) * p + j);
          }
  return out;
}

Eigen::MatrixXd block_rows(const HiddenStates& h, const BlockGrid& grid, BlockIndex block) {
  const BlockExtent e = grid.extent(block);
  Eigen::MatrixXd out(e.count(), h.tokens.cols());
  int k = 0;
  for (int r = e.row0; r < e.row0 + e.rows; ++r)
    for (int c = e.col0; c < e.col0 + e.cols; ++c) out.row(k++) = h.tokens.row(h.token_index(r, c));
  return out;
}

namespace {

void write_block_rows(HiddenStates& h, const BlockGrid& grid, BlockIndex block, const Eigen::MatrixXd& rows) {
  const BlockExtent e = grid.extent(block);
  int k = 0;
  for (int r = e.row0; r < e.row0 + e.rows; ++r)
    for (int c = e.col0; c < e.col0 + e.cols; ++c) h.tokens.row(h.token_index(r, c)) = rows.row(k++);
}

void check_grid(const HiddenStates& h, const BlockGrid& grid) {
  if (grid.height() != h.rows || grid.width() != h.cols)
    throw std::invalid_argument("block grid does not match the token grid");
}

}  // namespace

void cache_layer_kv(const HiddenStates& h, int layer, int frame, const BlockGrid& grid, const DiTModel& model,
                    KVCache& cache) {
  check_grid(h, grid);
  const auto& w = model.layer(layer);
  for (const auto& b : grid.blocks()) {
    const Eigen::MatrixXd rows = block_rows(h, grid, b);
    cache.insert(layer, frame, b, rows * w.wk, rows * w.wv);
  }
}

HiddenStates block_attention(const HiddenStates& h, int layer, int frame, const KVCache& cache,
                             const BlockGrid& grid, const FlowField* flow_to_prev, const DiTModel& model,
                             NeighborPolicy policy, AttentionTrace* trace) {
  check_grid(h, grid);
  const auto& w = model.layer(layer);
  const auto& enc = model.encodings();
  const Eigen::RowVectorXd key_self = enc.self * w.wk;
  const Eigen::RowVectorXd key_spatial = enc.spatial * w.wk;
  const Eigen::RowVectorXd key_temporal = enc.temporal * w.wk;

  HiddenStates out = h;
  out.layer = layer + 1;
  if (trace) trace->blocks.clear();
  for (const auto& b : grid.blocks()) {
    std::vector<CacheRef> refs{{frame, b}};
    std::vector<KeySource> kinds{KeySource::Self};
    if (policy.spatial)
      for (const auto& nb : spatial_neighbors(grid, b)) {
        refs.push_back({frame, nb});
        kinds.push_back(KeySource::Spatial);
      }
    if (flow_to_prev && policy.temporal > 0 && frame > 0)
      for (const auto& tb : temporal_neighbors(grid, b, *flow_to_prev, policy.temporal)) {
        refs.push_back({frame - 1, tb});
        kinds.push_back(KeySource::Temporal);
      }

    auto [keys, values] = cache.gather(layer, refs);
    std::vector<KeySource> sources;
    sources.reserve(static_cast<std::size_t>(keys.rows()));
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Eigen::Index n = cache.find(layer, refs[i].frame, refs[i].block)->keys.rows();
      const Eigen::RowVectorXd& shift =
          kinds[i] == KeySource::Self ? key_self : kinds[i] == KeySource::Spatial ? key_spatial : key_temporal;
      keys.middleRows(off, n).rowwise() += shift;
      sources.insert(sources.end(), static_cast<std::size_t>(n), kinds[i]);
      off += n;
    }

    const Eigen::MatrixXd q = block_rows(h, grid, b) * w.wq;
    std::vector<Eigen::MatrixXd> weights;
    const Eigen::MatrixXd c =
        scaled_dot_product_attention(q, keys, values, model.config().heads, trace ? &weights : nullptr);
    write_block_rows(out, grid, b, c);
    if (trace) trace->blocks.push_back({b, std::move(sources), refs, std::move(weights.front())});
  }
  return out;
}

HiddenStates block_self_attention(const HiddenStates& h, int layer, const BlockGrid& grid, const DiTModel& model) {
  check_grid(h, grid);
  const auto& w = model.layer(layer);
  HiddenStates out = h;
  out.layer = layer + 1;
  for (const auto& b : grid.blocks()) {
    const Eigen::MatrixXd rows = block_rows(h, grid, b);
    write_block_rows(out, grid, b,
                     scaled_dot_product_attention(rows * w.wq, rows * w.wk, rows * w.wv, model.config().heads));
  }
  return out;
}

HiddenStates apply_ffn(const HiddenStates& x, int layer, const DiTModel& model) {
  const auto& w = model.layer(layer);
  HiddenStates out = x;
  out.layer = layer + 1;
  const Eigen::MatrixXd hidden = gelu((x.tokens * w.w1).rowwise() + w.b1);
  out.tokens.noalias() += hidden * w.w2;
  out.tokens.rowwise() += w.b2;
  return out;
}

HiddenStates trajectory_cross_attention(const HiddenStates& c, int layer, int frame, const TrajectorySet& tracks,
                                        const KVCache& cache, int window, const DiTModel& model) {
  if (window < 1) throw std::invalid_argument("trajectory_cross_attention: window must be >= 1");
  if (window >= cache.horizon())
    throw std::invalid_argument("trajectory_cross_attention: window " + std::to_string(window) +
                                " exceeds what a cache horizon of " + std::to_string(cache.horizon()) + " retains");
  if (tracks.height != c.rows || tracks.width != c.cols ||
      tracks.starts.size() != static_cast<std::size_t>(c.rows) * c.cols)
    throw std::invalid_argument("trajectory_cross_attention: trajectories do not cover the token grid");
  if (!tracks.chains.empty() && !tracks.chains.front().empty() && tracks.chains.front().front().frame != frame)
    throw std::invalid_argument("trajectory_cross_attention: trajectories start at frame " +
                                std::to_string(tracks.chains.front().front().frame) + ", expected " +
                                std::to_string(frame));

  const auto& w = model.layer(layer);
  const int d = static_cast<int>(c.tokens.cols());
  const BlockGrid grid(c.rows, c.cols, model.config().block_size);
  auto lookup = [&](int f, int r, int col, const char* what) -> std::pair<const KVSlab*, Eigen::Index> {
    const BlockIndex b = grid.block_of(r, col);
    const KVSlab* slab = cache.find(layer, f, b);
    if (!slab)
      throw std::out_of_range(std::string("trajectory_cross_attention: missing ") + what + " K/V at layer " +
                              std::to_string(layer) + ", frame " + std::to_string(f) + ", block " + to_string(b));
    const BlockExtent e = grid.extent(b);
    return {slab, Eigen::Index(r - e.row0) * e.cols + (col - e.col0)};
  };

  HiddenStates attended = c;
  Eigen::MatrixXd keys(window + 1, d), values(window + 1, d);
  for (std::size_t i = 0; i < tracks.starts.size(); ++i) {
    const auto& start = tracks.starts[i];
    const int token = c.token_index(start.v, start.u);
    int n = 0;
    keys.row(n) = c.tokens.row(token) * w.wk;
    values.row(n) = c.tokens.row(token) * w.wv;
    ++n;
    const auto& chain = tracks.chains[i];
    for (int k = 1; k <= window && k < static_cast<int>(chain.size()); ++k) {
      const TrajectoryPoint& pt = chain[static_cast<std::size_t>(k)];
      if (pt.is_sentinel()) break;
      auto [slab, row] = lookup(pt.frame, pt.v, pt.u, "trajectory");
      keys.row(n) = slab->keys.row(row);
      values.row(n) = slab->values.row(row);
      ++n;
    }
    const Eigen::RowVectorXd q = c.tokens.row(token) * w.wq_traj;
    attended.tokens.row(token) =
        scaled_dot_product_attention(q, keys.topRows(n), values.topRows(n), model.config().heads).row(0);
  }
  return apply_ffn(attended, layer, model);
}

Frame transformer_forward(const Frame& x, DenoiseContext& ctx, const DiTModel& model) {
  const auto& cfg = model.config();
  HiddenStates h = patch_embed(x, model);
  const BlockGrid grid(h.rows, h.cols, cfg.block_size);
  KVCache local(cfg.cache_horizon());
  KVCache& cache = ctx.cache ? *ctx.cache : local;

  TrajectorySet self_tracks;
  const TrajectorySet* tracks = ctx.tracks;
  if (!tracks) {
    self_tracks = build_trajectories({}, {}, all_pixels(h.rows, h.cols), 1, ctx.frame, -1);
    self_tracks.height = h.rows;
    self_tracks.width = h.cols;
    tracks = &self_tracks;
  }
  if (ctx.flow_to_prev && !ctx.flow_to_prev->same_size(h.rows, h.cols))
    throw std::invalid_argument("denoise_predict: flow_to_prev must be at token-grid resolution");

  for (int l = 0; l < cfg.num_layers; ++l) {
    const bool active = cfg.is_vital(l) && (cfg.trajectory_attention || cfg.stnc_neighbors > 0);
    if (!active) {
      h = apply_ffn(block_self_attention(h, l, grid, model), l, model);
      continue;
    }
    cache_layer_kv(h, l, ctx.frame, grid, model, cache);
    const NeighborPolicy policy{cfg.stnc_neighbors > 0, cfg.stnc_neighbors};
    HiddenStates c = block_attention(h, l, ctx.frame, cache, grid, ctx.flow_to_prev, model, policy);
    h = cfg.trajectory_attention
            ? trajectory_cross_attention(c, l, ctx.frame, *tracks, cache, cfg.trajectory_window, model)
            : apply_ffn(c, l, model);
  }
  return unpatchify(h, model, x.height(), x.width());
}

namespace {

Frame shrink_levels(const Frame& x, double ab, const DiTConfig& cfg, int level) {
  auto gain = [ab](double std) { return ab * std * std / (ab * std * std + (1.0 - ab)); };
  const bool split = level <= cfg.prior_levels && x.height() % 2 == 0 && x.width() % 2 == 0;
  if (!split) return gain(cfg.prior_std * std::ldexp(1.0, level - 1)) * x;
  WaveletBands b = dwt_haar(x);
  const double g = gain(cfg.prior_detail_std * std::pow(cfg.prior_detail_growth, level - 1));
  b.hl = g * b.hl;
  b.lh = g * b.lh;
  b.hh = g * b.hh;
  b.ll = shrink_levels(b.ll, ab, cfg, level + 1);
  return idwt_haar(b);
}

}  // namespace

Frame prior_shrink(const Frame& centred, double ab, const DiTConfig& cfg) { return shrink_levels(centred, ab, cfg, 1); }

Frame denoise_predict(const Frame& x_t, int t, const DiffusionSchedule& schedule, DenoiseContext& ctx,
                      const DiTModel& model) {
  if (t < 0 || t >= schedule.steps())
    throw std::invalid_argument("denoise_predict: timestep " + std::to_string(t) + " outside [0, " +
                                std::to_string(schedule.steps()) + ")");
  const Frame z = transformer_forward(x_t, ctx, model);
  const auto& cfg = model.config();
  const double ab = schedule.alpha_bar(t);
  const double sab = std::sqrt(ab);
  const double mu = cfg.prior_mean;
  const Frame centred = map_planes(z, [&](const Plane& p) -> Plane { return (p.array() / sab - mu).matrix(); });
  const Frame shrunk = prior_shrink(centred, ab, cfg);
  const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
  return zip_planes(x_t, shrunk, [&](const Plane& xt, const Plane& d) -> Plane {
    return (xt - sab * (d.array() + mu).matrix()) * inv_noise;
  });
}

}  // namespace ditvr
