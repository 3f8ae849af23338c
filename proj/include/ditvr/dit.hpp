#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ditvr/flow.hpp"
#include "ditvr/schedule.hpp"
#include "ditvr/stnc.hpp"
#include "ditvr/tensor.hpp"

namespace ditvr {

// Toy diffusion transformer. Token layout: the first channels * patch^2
// feature dims carry patch content, the remaining dims a 2-D sinusoidal
// position signal. Weights are a fixed structure (content pass-through,
// positional query/key locality) plus a seeded random perturbation; there is
// no training.
struct DiTConfig {
  int num_layers = 6;
  int hidden_dim = 32;
  int heads = 1;
  int patch_size = 4;
  int block_size = 4;  // in tokens
  int channels = 1;
  std::set<int> vital_layers{2, 5};
  std::uint64_t seed = 0;

  bool trajectory_attention = true;  // cross-attention along trajectories in vital layers
  int stnc_neighbors = 1;            // temporal neighbour blocks; 0 turns the neighbour cache off
  int trajectory_window = 2;         // previous frames visited by trajectory cross-attention
  bool separate_trajectory_query = true;

  double init_scale = 0.001;          // std of the random weight perturbation
  double attention_sharpness = 64.0;  // squared query/key gain on the position dims
  double trajectory_sharpness = 0.0;  // squared query/key gain on the content dims
  double encoding_scale = 0.1;        // std of the provenance encodings
  // Gaussian image prior, diagonal in a multi-level orthonormal Haar basis:
  // coarse band std prior_std (pixel units), detail std at level j (1 = finest)
  // prior_detail_std * prior_detail_growth^(j-1).
  double prior_mean = 0.5;
  double prior_std = 0.25;
  int prior_levels = 3;
  double prior_detail_std = 0.03;
  double prior_detail_growth = 2.0;

  int content_dim() const { return channels * patch_size * patch_size; }
  bool is_vital(int layer) const { return vital_layers.count(layer) != 0; }
  // Frames retained per layer so trajectory cross-attention can see `window` frames back.
  int cache_horizon() const { return std::max(2, trajectory_window + 1); }
  void validate() const;

  static std::set<int> every_third_layer(int num_layers);
};

void save_config(const std::filesystem::path& path, const DiTConfig& cfg);
DiTConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const DiTConfig& cfg);
// Keys present in the text override `base`.
DiTConfig config_from_json(const std::string& text, DiTConfig base = {});

// Provenance encodings added to keys only: self (P_0), spatial (P_s), temporal (P_t).
struct PositionalEncodings {
  Eigen::RowVectorXd self;
  Eigen::RowVectorXd spatial;
  Eigen::RowVectorXd temporal;
};

struct LayerWeights {
  Eigen::MatrixXd wq, wk, wv, wq_traj;  // d x d, row-vector convention (x * W)
  Eigen::MatrixXd w1;                   // d x 4d
  Eigen::RowVectorXd b1;
  Eigen::MatrixXd w2;                   // 4d x d
  Eigen::RowVectorXd b2;
};

class DiTModel {
 public:
  explicit DiTModel(DiTConfig cfg);

  const DiTConfig& config() const { return cfg_; }
  const PositionalEncodings& encodings() const { return enc_; }
  PositionalEncodings& encodings() { return enc_; }
  const LayerWeights& layer(int l) const { return layers_.at(static_cast<std::size_t>(l)); }
  LayerWeights& layer(int l) { return layers_.at(static_cast<std::size_t>(l)); }
  const Eigen::MatrixXd& embedding() const { return embed_; }      // content_dim x d
  const Eigen::MatrixXd& unembedding() const { return unembed_; }  // d x content_dim
  Eigen::MatrixXd& embedding() { return embed_; }
  Eigen::MatrixXd& unembedding() { return unembed_; }

  // rows*cols x d; content dims are zero.
  Eigen::MatrixXd position_signal(int rows, int cols) const;

  // Flat little-endian binary: "DITW", u32 version, u32 num_layers,
  // hidden_dim, heads, patch_size, channels, u64 seed, then float64 arrays.
  void save_weights(const std::filesystem::path& path) const;
  void load_weights(const std::filesystem::path& path);
  bool same_weights(const DiTModel& other) const;

 private:
  std::vector<const Eigen::MatrixXd*> matrices() const;
  std::vector<const Eigen::RowVectorXd*> vectors() const;

  DiTConfig cfg_;
  PositionalEncodings enc_;
  Eigen::MatrixXd embed_, unembed_;
  std::vector<LayerWeights> layers_;
};

// Token grid of one frame at one layer; tokens are raster ordered.
struct HiddenStates {
  int rows = 0;
  int cols = 0;
  int layer = 0;
  Eigen::MatrixXd tokens;  // (rows*cols) x d

  int token_index(int r, int c) const { return r * cols + c; }
};

// Linear projection of non-overlapping patches (edge-replicated past the
// border) plus the position signal. ceil(H/p) x ceil(W/p) tokens.
HiddenStates patch_embed(const Frame& frame, const DiTModel& model);

// Inverse layout of patch_embed through the unembedding; cropped to height x width.
Frame unpatchify(const HiddenStates& h, const DiTModel& model, int height, int width);

// Rows of `h` belonging to a block, in raster order within the block.
Eigen::MatrixXd block_rows(const HiddenStates& h, const BlockGrid& grid, BlockIndex block);

// Project h to raw keys (h W^K) and values (h W^V) and store them per block
// under (layer, frame).
void cache_layer_kv(const HiddenStates& h, int layer, int frame, const BlockGrid& grid, const DiTModel& model,
                    KVCache& cache);

enum class KeySource { Self, Spatial, Temporal };

struct AttentionTrace {
  struct BlockTrace {
    BlockIndex block;
    std::vector<KeySource> sources;  // one per key row
    std::vector<CacheRef> refs;
    Eigen::MatrixXd weights;         // head 0, queries x keys
  };
  std::vector<BlockTrace> blocks;
};

struct NeighborPolicy {
  bool spatial = true;
  int temporal = 1;  // temporal neighbours taken from frame - 1
};

// Per block: Q = h_blk W^Q; keys/values gathered from the cache for
// [self, spatial neighbours, temporal neighbours] with P_0 / P_s / P_t (times
// W^K) added to the keys. The attention output replaces the block's states.
// flow_to_prev (hidden-grid resolution) may be null, in which case there are
// no temporal neighbours. Throws when a required slab is missing.
HiddenStates block_attention(const HiddenStates& h, int layer, int frame, const KVCache& cache,
                             const BlockGrid& grid, const FlowField* flow_to_prev, const DiTModel& model,
                             NeighborPolicy policy = {}, AttentionTrace* trace = nullptr);

// Plain per-block self-attention without encodings or cache.
HiddenStates block_self_attention(const HiddenStates& h, int layer, const BlockGrid& grid, const DiTModel& model);

// x + W2 gelu(x W1 + b1) + b2.
HiddenStates apply_ffn(const HiddenStates& x, int layer, const DiTModel& model);

// For each token: Q_t, the first key and the first value are projections of
// the token's block-attention output; the remaining keys/values are the
// cached K/V at its trajectory positions in frames frame-1 .. frame-window
// (stopping at the first sentinel). Followed by the FFN.
// `tracks` holds backward chains for every token of the frame.
HiddenStates trajectory_cross_attention(const HiddenStates& c, int layer, int frame, const TrajectorySet& tracks,
                                        const KVCache& cache, int window, const DiTModel& model);

struct DenoiseContext {
  int frame = 0;
  KVCache* cache = nullptr;               // shared across the frames of one diffusion step
  const TrajectorySet* tracks = nullptr;  // hidden-grid backward chains of this frame
  const FlowField* flow_to_prev = nullptr;  // hidden-grid flow frame -> frame - 1
};

// Noise prediction for x_t. The transformer output z (same layout as x_t) is
// read through a timestep-conditioned Gaussian-prior head: per Haar band b
// with prior std s_b,
//   x0_b = g_b (z / sqrt(ab) - mu)_b,  g_b = ab s_b^2 / (ab s_b^2 + 1 - ab)
// then x0 = mu + synthesis, eps = (x_t - sqrt(ab) x0) / sqrt(1 - ab).
Frame denoise_predict(const Frame& x_t, int t, const DiffusionSchedule& schedule, DenoiseContext& ctx,
                      const DiTModel& model);

// Posterior-mean shrinkage of a centred frame under the multi-level prior at
// signal level ab.
Frame prior_shrink(const Frame& centred, double ab, const DiTConfig& cfg);

// Transformer body only: patch_embed, all layers, unpatchify.
Frame transformer_forward(const Frame& x, DenoiseContext& ctx, const DiTModel& model);

}  // namespace ditvr
