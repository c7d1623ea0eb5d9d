#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "idhnet/volume.hpp"

namespace idhnet {

/// Undirected node pair, always stored with first < second. Region ids are 1-based.
struct EdgeKey {
  int first = 0;
  int second = 0;

  static EdgeKey of(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

/// Label volume with regions 1..R; label 0 is background.
class NodeAtlas {
 public:
  /// Validates that every label is an integer in 0..region_count and that
  /// every region is non-empty.
  NodeAtlas(Volume labels, int region_count);

  const Volume& labels() const { return labels_; }
  int region_count() const { return region_count_; }
  const std::vector<std::size_t>& voxel_counts() const { return voxel_counts_; }
  Mask region_mask(int region) const;
  /// All labelled voxels.
  Mask brain_mask() const;

 private:
  Volume labels_;
  int region_count_ = 0;
  std::vector<std::size_t> voxel_counts_;  // index region-1
};

/// Loads a node atlas. Without an explicit region count the largest label is used.
NodeAtlas load_node_atlas(const std::filesystem::path& path, std::optional<int> region_count = std::nullopt);

/// Per-subject tract-density volumes keyed by node pair. A pair missing from
/// a subject's map has zero density everywhere.
struct TractDensitySet {
  GridDims dims;
  std::vector<std::map<EdgeKey, Volume>> subjects;

  /// Checks shared grid, non-negative densities and ordered keys.
  void validate() const;
};

/// Directory layout: one subdirectory per subject (sorted by name) holding
/// "<i>_<j>.json" / "<i>_<j>.raw" volumes.
TractDensitySet load_tract_densities(const std::filesystem::path& dir);
void save_tract_densities(const TractDensitySet& set, const std::filesystem::path& dir);

struct EdgeAtlasConfig {
  int retention_quorum = 9;
  double top_fraction = 0.05;
};

/// Retained edges with one binary voxel mask each, sorted by pair.
class EdgeAtlas {
 public:
  EdgeAtlas() = default;
  EdgeAtlas(GridDims dims, std::vector<EdgeKey> edges, std::vector<Mask> masks);

  const GridDims& dims() const { return dims_; }
  const std::vector<EdgeKey>& edges() const { return edges_; }
  const std::vector<Mask>& masks() const { return masks_; }
  std::size_t size() const { return edges_.size(); }
  bool contains(int i, int j) const;

  /// Symmetric lookup; throws LookupError for an absent pair.
  const Mask& edge_mask(int i, int j) const;

 private:
  GridDims dims_;
  std::vector<EdgeKey> edges_;
  std::vector<Mask> masks_;
};

/// Number of retained voxels for a positive-voxel count at a top fraction:
/// ceil(fraction * count), at least 1.
std::size_t top_voxel_count(std::size_t positive_voxels, double top_fraction);

/// Quorum filter, per-voxel mean over all subjects, then per-edge top-fraction
/// threshold over positive-mean voxels with ties at the threshold kept.
EdgeAtlas build_edge_atlas(const TractDensitySet& densities, const EdgeAtlasConfig& config = {});

/// "<stem>.json" index + "<stem>.bin" payload of uint32 LE flat indices.
void save_edge_atlas(const EdgeAtlas& atlas, const std::filesystem::path& path);
EdgeAtlas load_edge_atlas(const std::filesystem::path& path);

}  // namespace idhnet
