#include "ditvr/stnc.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

#include "ditvr/flow.hpp"

namespace ditvr {

std::string to_string(const BlockIndex& b) { return "(" + std::to_string(b.p) + "," + std::to_string(b.q) + ")"; }

BlockGrid::BlockGrid(int height, int width, int block_size)
    : height_(height), width_(width), block_size_(block_size) {
  if (block_size < 1) throw std::invalid_argument("BlockGrid: block_size must be >= 1");
  if (height < 1 || width < 1) throw std::invalid_argument("BlockGrid: grid dimensions must be >= 1");
  rows_ = (height + block_size - 1) / block_size;
  cols_ = (width + block_size - 1) / block_size;
}

BlockExtent BlockGrid::extent(BlockIndex b) const {
  if (!contains(b)) throw std::out_of_range("BlockGrid: block " + to_string(b) + " outside grid");
  BlockExtent e;
  e.row0 = b.p * block_size_;
  e.col0 = b.q * block_size_;
  e.rows = std::min(block_size_, height_ - e.row0);
  e.cols = std::min(block_size_, width_ - e.col0);
  return e;
}

std::vector<BlockIndex> BlockGrid::blocks() const {
  std::vector<BlockIndex> out;
  out.reserve(static_cast<std::size_t>(block_count()));
  for (int p = 0; p < rows_; ++p)
    for (int q = 0; q < cols_; ++q) out.push_back({p, q});
  return out;
}

BlockGrid partition_blocks(int height, int width, int block_size) { return BlockGrid(height, width, block_size); }

std::vector<BlockIndex> spatial_neighbors(const BlockGrid& grid, BlockIndex block) {
  if (!grid.contains(block)) throw std::out_of_range("spatial_neighbors: block " + to_string(block) + " outside grid");
  std::vector<BlockIndex> out;
  if (block.q > 0) out.push_back({block.p, block.q - 1});
  if (block.p > 0) out.push_back({block.p - 1, block.q});
  return out;
}

std::map<BlockIndex, int> landing_counts(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev) {
  if (!flow_to_prev.same_size(grid.height(), grid.width()))
    throw std::invalid_argument("temporal_neighbor: flow resolution differs from the block grid");
  const BlockExtent e = grid.extent(block);
  std::map<BlockIndex, int> counts;
  for (int r = e.row0; r < e.row0 + e.rows; ++r) {
    for (int c = e.col0; c < e.col0 + e.cols; ++c) {
      const int tx = round_coord(c + flow_to_prev.du(r, c));
      const int ty = round_coord(r + flow_to_prev.dv(r, c));
      if (tx < 0 || ty < 0 || tx >= grid.width() || ty >= grid.height()) continue;
      ++counts[grid.block_of(ty, tx)];
    }
  }
  return counts;
}

std::vector<BlockIndex> temporal_neighbors(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev,
                                           int k) {
  if (k < 0) throw std::invalid_argument("temporal_neighbors: k must be >= 0");
  const auto counts = landing_counts(grid, block, flow_to_prev);
  std::vector<std::pair<int, BlockIndex>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [b, n] : counts) ranked.emplace_back(n, b);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<BlockIndex> out;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < k; ++i) out.push_back(ranked[i].second);
  return out;
}

std::optional<BlockIndex> temporal_neighbor(const BlockGrid& grid, BlockIndex block, const FlowField& flow_to_prev) {
  const auto best = temporal_neighbors(grid, block, flow_to_prev, 1);
  if (best.empty()) return std::nullopt;
  return best.front();
}

KVCache::KVCache(int horizon, std::optional<int> blocks_per_frame)
    : horizon_(horizon), blocks_per_frame_(blocks_per_frame) {
  if (horizon < 1) throw std::invalid_argument("KVCache: horizon must be >= 1");
}

void KVCache::insert(int layer, int frame, BlockIndex block, Eigen::MatrixXd keys, Eigen::MatrixXd values) {
  if (keys.rows() != values.rows())
    throw std::invalid_argument("KVCache::insert: key/value token counts differ (" + std::to_string(keys.rows()) +
                                " vs " + std::to_string(values.rows()) + ")");
  auto& entries = layers_[layer];
  entries.insert_or_assign(Key{frame, block}, KVSlab{std::move(keys), std::move(values)});
  const int newest = entries.rbegin()->first.first;
  while (!entries.empty() && newest - entries.begin()->first.first >= horizon_) {
    const int oldest = entries.begin()->first.first;
    while (!entries.empty() && entries.begin()->first.first == oldest) entries.erase(entries.begin());
  }
  assert(!blocks_per_frame_ || entries.size() <= static_cast<std::size_t>(horizon_ * *blocks_per_frame_));
}

const KVSlab* KVCache::find(int layer, int frame, BlockIndex block) const {
  const auto layer_it = layers_.find(layer);
  if (layer_it == layers_.end()) return nullptr;
  const auto it = layer_it->second.find(Key{frame, block});
  return it == layer_it->second.end() ? nullptr : &it->second;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> KVCache::gather(int layer, std::span<const CacheRef> refs) const {
  std::vector<const KVSlab*> slabs;
  slabs.reserve(refs.size());
  Eigen::Index rows = 0, dk = 0, dv = 0;
  for (const auto& ref : refs) {
    const KVSlab* slab = find(layer, ref.frame, ref.block);
    if (!slab)
      throw std::out_of_range("KVCache::gather: miss at layer " + std::to_string(layer) + ", frame " +
                              std::to_string(ref.frame) + ", block " + to_string(ref.block));
    if (!slabs.empty() && (slab->keys.cols() != dk || slab->values.cols() != dv))
      throw std::invalid_argument("KVCache::gather: inconsistent slab widths");
    dk = slab->keys.cols();
    dv = slab->values.cols();
    rows += slab->keys.rows();
    slabs.push_back(slab);
  }
  Eigen::MatrixXd keys(rows, dk), values(rows, dv);
  Eigen::Index off = 0;
  for (const KVSlab* slab : slabs) {
    keys.middleRows(off, slab->keys.rows()) = slab->keys;
    values.middleRows(off, slab->values.rows()) = slab->values;
    off += slab->keys.rows();
  }
  return {std::move(keys), std::move(values)};
}

std::size_t KVCache::entries(int layer) const {
  const auto it = layers_.find(layer);
  return it == layers_.end() ? 0 : it->second.size();
}

std::size_t KVCache::total_entries() const {
  std::size_t n = 0;
  for (const auto& [layer, entries] : layers_) n += entries.size();
  return n;
}

std::vector<int> KVCache::frames(int layer) const {
  std::vector<int> out;
  const auto it = layers_.find(layer);
  if (it == layers_.end()) return out;
  for (const auto& [key, slab] : it->second)
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  return out;
}

void KVCache::write_occupancy_csv(std::ostream& out) const {
  out << "layer,frame,block,token_count\n";
  for (const auto& [layer, entries] : layers_)
    for (const auto& [key, slab] : entries)
      out << layer << ',' << key.first << ',' << key.second.p << ':' << key.second.q << ',' << slab.keys.rows()
          << '\n';
}

}  // namespace ditvr
