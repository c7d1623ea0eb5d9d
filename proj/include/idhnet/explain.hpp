#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "idhnet/atlas.hpp"
#include "idhnet/gnn.hpp"

namespace idhnet {

struct ExplainConfig {
  double size_weight = 0.2;      // λ_size
  double entropy_weight = 0.1;   // λ_ent
  std::size_t iterations = 200;
  double learning_rate = 0.05;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExplainConfig& c);
void from_json(const nlohmann::json& j, ExplainConfig& c);

struct EdgeMaskResult {
  std::vector<EdgeKey> edges;       // graph edge order
  std::vector<double> scores;       // σ(m_e), one per edge
  std::vector<double> objective;    // objective before each update, then the final value
  int explained_class = 0;          // model prediction on the unmasked graph
};

/// Objective maximized over mask logits m:
///   ln P(ŷ | edge features scaled by σ(m)) − λ_size Σ σ(m_e) − λ_ent Σ H(σ(m_e))
/// where ŷ is the unmasked predicted class and H the binary entropy.
/// `gradient` (if non-null) receives d(objective)/dm.
double explain_objective(const GnnModel& model, const BrainGraph& graph, std::span<const double> logits,
                         int target_class, const ExplainConfig& config, std::vector<double>* gradient = nullptr);

/// Optimizes the mask from all-zero logits with Adam for a fixed budget.
EdgeMaskResult explain_edges(const GnnModel& model, const BrainGraph& graph, const ExplainConfig& config = {});

/// Edge features multiplied row-wise by the mask scores.
Tensor masked_edge_features(const BrainGraph& graph, std::span<const double> scores);

struct Subnetwork {
  std::vector<EdgeKey> edges;
  double threshold = 0.5;
};

/// Edges whose score is strictly greater than the threshold.
Subnetwork threshold_subnetwork(const EdgeMaskResult& result, double threshold);

/// Voxel value = number of retained edges whose atlas mask contains it.
/// `node_offset` maps graph node indices onto atlas region ids (region = node + offset).
Volume tract_density_map(const Subnetwork& subnetwork, const EdgeAtlas& atlas, int node_offset = 1,
                         std::array<double, 3> voxel_size_mm = {2.0, 2.0, 2.0});

/// CSV with header "i,j,score".
void save_edge_scores_csv(const EdgeMaskResult& result, const std::filesystem::path& path);

}  // namespace idhnet
