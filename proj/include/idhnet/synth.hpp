#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "idhnet/atlas.hpp"
#include "idhnet/graph.hpp"
#include "idhnet/volume.hpp"

namespace idhnet {

/// Invasion extent planted in one class.
struct ClassInvasion {
  std::size_t affected_edges = 0;
  double amplitude = 0.0;
};

/// Synthetic cohort parameters. Wild-type subjects carry broader edge
/// invasion than mutants (more affected edges).
struct SynthConfig {
  // atlas phantoms
  GridDims grid{24, 24, 24};
  double voxel_size_mm = 2.0;
  int regions = 6;
  std::size_t min_region_voxels = 50;
  std::size_t atlas_subjects = 10;
  std::size_t absent_pairs = 3;  // missing from at least 2 atlas subjects
  std::size_t flaky_pairs = 1;   // missing from exactly 1 atlas subject
  double tract_radius = 1.2;     // voxels
  double tract_peak = 50.0;      // tracts through the tube axis

  // cohort
  std::size_t mutant_subjects = 150;
  std::size_t wild_type_subjects = 150;
  ClassInvasion mutant{1, 0.3};
  ClassInvasion wild_type{4, 0.3};
  /// Volume level: Gaussian voxel noise sigma.
  double noise = 0.05;

  // graph level
  std::size_t graph_nodes = 6;
  double graph_edge_density = 1.0;  // fraction of node pairs present in the shared template
  std::size_t node_dim = 12;
  std::size_t edge_dim = 12;
  double background_low = 0.4;
  double background_high = 0.6;

  std::uint64_t seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Shift giving the requested signal-to-noise ratio against the uniform
/// graph-level background: snr * (high - low) / sqrt(12).
double amplitude_for_snr(double snr, const SynthConfig& config);

struct SubjectTruth {
  std::string id;
  int label = 0;
  std::vector<EdgeKey> affected_edges;
  double amplitude = 0.0;
};

struct SynthTruth {
  std::vector<SubjectTruth> subjects;
  std::uint64_t seed = 0;
};

nlohmann::json truth_json(const SynthTruth& truth);

struct AtlasPair {
  NodeAtlas node_atlas;
  TractDensitySet densities;
};

/// Partitions an ellipsoidal brain into R nearest-seed regions and draws
/// noisy tract-density tubes between region centroids for every pair and
/// atlas subject, leaving the configured pairs empty in some subjects.
AtlasPair generate_atlas_pair(const SynthConfig& config);

struct PhantomSubject {
  std::string id;
  int label = 0;
  MultiModalScan scan;
};

struct PhantomCohort {
  std::vector<PhantomSubject> subjects;
  SynthTruth truth;
};

/// Baseline intensity per modality and region plus Gaussian noise; voxels in
/// the masks of a subject's affected edges and of their endpoint regions are
/// shifted once by the class amplitude.
PhantomCohort generate_phantom_cohort(const SynthConfig& config, const NodeAtlas& node_atlas,
                                      const EdgeAtlas& edge_atlas);

struct GraphCohort {
  GraphDataset dataset;
  SynthTruth truth;
};

/// Latent-feature graphs on a shared edge template: background features
/// uniform in [background_low, background_high]; affected edges get every
/// channel shifted by the class amplitude. Edge keys in the truth are 0-based
/// node indices.
GraphCohort generate_graph_cohort(const SynthConfig& config);

/// A graph with exactly one shifted edge (the class amplitude of wild-type),
/// drawn on the same edge template as generate_graph_cohort.
struct PlantedGraph {
  BrainGraph graph;
  std::size_t planted_edge = 0;  // index into graph.edges
};
PlantedGraph generate_planted_graph(const SynthConfig& config, std::uint64_t seed);

}  // namespace idhnet
