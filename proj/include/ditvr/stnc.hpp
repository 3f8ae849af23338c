#pragma once

#include <compare>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ditvr/flow_field.hpp"

namespace ditvr {

struct BlockIndex {
  int p = 0;  // block row
  int q = 0;  // block column
  auto operator<=>(const BlockIndex&) const = default;
};

std::string to_string(const BlockIndex& b);

// Token rectangle covered by a block, clipped to the real (unpadded) grid.
struct BlockExtent {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
  int count() const { return rows * cols; }
};

// Non-overlapping block partition of a height x width grid. When the grid is
// not divisible by the block size the bottom/right remainder is recorded as
// padding; blocks in the last row/column then cover fewer real cells.
class BlockGrid {
 public:
  BlockGrid(int height, int width, int block_size);

  int height() const { return height_; }
  int width() const { return width_; }
  int block_size() const { return block_size_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int pad_bottom() const { return rows_ * block_size_ - height_; }
  int pad_right() const { return cols_ * block_size_ - width_; }
  int block_count() const { return rows_ * cols_; }

  bool contains(BlockIndex b) const { return b.p >= 0 && b.q >= 0 && b.p < rows_ && b.q < cols_; }
  BlockExtent extent(BlockIndex b) const;
  BlockIndex block_of(int row, int col) const { return {row / block_size_, col / block_size_}; }
  std::vector<BlockIndex> blocks() const;  // raster order

 private:
  int height_, width_, block_size_, rows_, cols_;
};

BlockGrid partition_blocks(int height, int width, int block_size);

// Existing members of [(p, q-1), (p-1, q)], in that order.
std::vector<BlockIndex> spatial_neighbors(const BlockGrid& grid, BlockIndex block);

// Per previous-frame block, how many real pixels of `block` land in it under
// flow_to_prev (nearest-integer landing; out-of-frame landings dropped).
std::map<BlockIndex, int> landing_counts(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev);

// Previous-frame block receiving the most pixel landings; ties go to the
// lexicographically smallest index. Empty when every landing leaves the frame.
std::optional<BlockIndex> temporal_neighbor(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev);

// The k best blocks under the same ordering as temporal_neighbor.
std::vector<BlockIndex> temporal_neighbors(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev,
                                           int k);

struct KVSlab {
  Eigen::MatrixXd keys;    // tokens x d
  Eigen::MatrixXd values;  // tokens x d
};

struct CacheRef {
  int frame = 0;
  BlockIndex block;
};

// Layer-indexed key/value slabs keyed by (frame, block). Each layer keeps at
// most `horizon` consecutive frames; inserting frame f evicts every frame
// <= f - horizon of that layer. Single writer per layer.
class KVCache {
 public:
  explicit KVCache(int horizon = 2, std::optional<int> blocks_per_frame = std::nullopt);

  int horizon() const { return horizon_; }

  void insert(int layer, int frame, BlockIndex block, Eigen::MatrixXd keys, Eigen::MatrixXd values);
  const KVSlab* find(int layer, int frame, BlockIndex block) const;
  bool contains(int layer, int frame, BlockIndex block) const { return find(layer, frame, block) != nullptr; }

  // Row-wise concatenation in the order of refs. Throws on a miss.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gather(int layer, std::span<const CacheRef> refs) const;

  std::size_t entries(int layer) const;
  std::size_t total_entries() const;
  std::vector<int> frames(int layer) const;  // ascending

  // CSV with header layer,frame,block,token_count; block written as "p:q".
  void write_occupancy_csv(std::ostream& out) const;

 private:
  using Key = std::pair<int, BlockIndex>;
  int horizon_;
  std::optional<int> blocks_per_frame_;
  std::map<int, std::map<Key, KVSlab>> layers_;
};

}  // namespace ditvr
