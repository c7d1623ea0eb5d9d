#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "idhnet/atlas.hpp"
#include "idhnet/rng.hpp"
#include "idhnet/tensor.hpp"

namespace idhnet {

/// Label convention: 1 = IDH mutant (positive class), 0 = wild-type.
inline constexpr int kMutant = 1;
inline constexpr int kWildType = 0;

/// Brain network of one subject. Edge endpoints are 0-based node indices;
/// each undirected pair appears once and carries one Z-vector of features.
struct BrainGraph {
  std::string id;
  Tensor node_features;  // N×D_n
  std::vector<EdgeKey> edges;
  Tensor edge_features;  // E×Z
  int label = 0;

  std::size_t num_nodes() const { return node_features.rows(); }
  std::size_t num_edges() const { return edges.size(); }
  std::size_t edge_dim() const { return edge_features.rank() == 2 ? edge_features.cols() : 0; }

  /// No self-loops, no duplicate pairs, endpoints < N, one feature row per
  /// edge, binary label.
  void validate() const;
};

struct GraphDataset {
  std::size_t nodes = 0;
  std::size_t latent_dim = 0;
  std::vector<BrainGraph> graphs;

  const BrainGraph& find(const std::string& id) const;
};

/// {"nodes":N,"latent_dim":Z,"graphs":[{"id","label","node_features",
/// "edges","edge_features"}]}
void save_graph_dataset(const GraphDataset& dataset, const std::filesystem::path& path);
GraphDataset load_graph_dataset(const std::filesystem::path& path);

/// Removes each undirected edge independently with probability p_drop.
BrainGraph edge_drop(const BrainGraph& graph, double p_drop, Rng& rng);

/// Index sets into the cohort, each sorted ascending.
struct CohortSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Stratified 80:20 split into (pool, test), then 80:20 of the pool into
/// (train, val). Test size is round(0.2 N) and validation size round(0.2 pool);
/// per-class shares follow largest-remainder apportionment.
CohortSplit split_cohort(std::span<const int> labels, std::uint64_t seed);

}  // namespace idhnet
