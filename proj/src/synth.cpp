#include "idhnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idhnet/errors.hpp"
#include "idhnet/rng.hpp"

namespace idhnet {

void SynthConfig::validate() const {
  if (grid.count() == 0) throw DataError("synth: grid dims must be positive");
  if (regions < 2) throw DataError("synth: need at least 2 regions");
  if (atlas_subjects < 1) throw DataError("synth: need at least 1 atlas subject");
  const std::size_t pairs = static_cast<std::size_t>(regions) * static_cast<std::size_t>(regions - 1) / 2;
  if (absent_pairs + flaky_pairs > pairs) throw DataError("synth: more absent/flaky pairs than node pairs");
  if (absent_pairs > 0 && atlas_subjects < 2) throw DataError("synth: absent pairs need at least 2 atlas subjects");
  if (wild_type.affected_edges <= mutant.affected_edges) {
    throw DataError("synth: wild-type must affect more edges than mutant");
  }
  if (graph_nodes < 2 || node_dim == 0 || edge_dim == 0) throw DataError("synth: graph dims must be positive");
  if (!(graph_edge_density > 0.0 && graph_edge_density <= 1.0)) throw DataError("synth: edge density in (0, 1]");
  if (!(background_high > background_low)) throw DataError("synth: background range is empty");
  if (noise < 0.0 || tract_radius <= 0.0 || tract_peak <= 0.0) throw DataError("synth: invalid noise/tract settings");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"grid", {c.grid.nx, c.grid.ny, c.grid.nz}},
       {"voxel_size_mm", c.voxel_size_mm},
       {"regions", c.regions},
       {"min_region_voxels", c.min_region_voxels},
       {"atlas_subjects", c.atlas_subjects},
       {"absent_pairs", c.absent_pairs},
       {"flaky_pairs", c.flaky_pairs},
       {"tract_radius", c.tract_radius},
       {"tract_peak", c.tract_peak},
       {"mutant_subjects", c.mutant_subjects},
       {"wild_type_subjects", c.wild_type_subjects},
       {"mutant", {{"affected_edges", c.mutant.affected_edges}, {"amplitude", c.mutant.amplitude}}},
       {"wild_type", {{"affected_edges", c.wild_type.affected_edges}, {"amplitude", c.wild_type.amplitude}}},
       {"noise", c.noise},
       {"graph_nodes", c.graph_nodes},
       {"graph_edge_density", c.graph_edge_density},
       {"node_dim", c.node_dim},
       {"edge_dim", c.edge_dim},
       {"background_low", c.background_low},
       {"background_high", c.background_high},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  if (j.contains("grid")) {
    const auto g = j.at("grid").get<std::vector<std::size_t>>();
    if (g.size() != 3) throw FormatError("synth grid needs 3 entries");
    c.grid = {g[0], g[1], g[2]};
  }
  c.voxel_size_mm = j.value("voxel_size_mm", c.voxel_size_mm);
  c.regions = j.value("regions", c.regions);
  c.min_region_voxels = j.value("min_region_voxels", c.min_region_voxels);
  c.atlas_subjects = j.value("atlas_subjects", c.atlas_subjects);
  c.absent_pairs = j.value("absent_pairs", c.absent_pairs);
  c.flaky_pairs = j.value("flaky_pairs", c.flaky_pairs);
  c.tract_radius = j.value("tract_radius", c.tract_radius);
  c.tract_peak = j.value("tract_peak", c.tract_peak);
  c.mutant_subjects = j.value("mutant_subjects", c.mutant_subjects);
  c.wild_type_subjects = j.value("wild_type_subjects", c.wild_type_subjects);
  for (auto [key, target] : {std::pair{"mutant", &c.mutant}, std::pair{"wild_type", &c.wild_type}}) {
    if (!j.contains(key)) continue;
    target->affected_edges = j.at(key).value("affected_edges", target->affected_edges);
    target->amplitude = j.at(key).value("amplitude", target->amplitude);
  }
  c.noise = j.value("noise", c.noise);
  c.graph_nodes = j.value("graph_nodes", c.graph_nodes);
  c.graph_edge_density = j.value("graph_edge_density", c.graph_edge_density);
  c.node_dim = j.value("node_dim", c.node_dim);
  c.edge_dim = j.value("edge_dim", c.edge_dim);
  c.background_low = j.value("background_low", c.background_low);
  c.background_high = j.value("background_high", c.background_high);
  c.seed = j.value("seed", c.seed);
}

double amplitude_for_snr(double snr, const SynthConfig& config) {
  return snr * (config.background_high - config.background_low) / std::sqrt(12.0);
}

nlohmann::json truth_json(const SynthTruth& truth) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : truth.subjects) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : s.affected_edges) edges.push_back({e.first, e.second});
    subjects.push_back({{"id", s.id}, {"label", s.label}, {"affected_edges", edges}, {"amplitude", s.amplitude}});
  }
  return {{"seed", truth.seed}, {"subjects", subjects}};
}

namespace {

using Point = std::array<double, 3>;

double squared_distance(const Point& a, const Point& b) {
  double d = 0.0;
  for (int k = 0; k < 3; ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return d;
}

Point voxel_center(const GridDims& dims, std::size_t flat) {
  const auto c = dims.coords(flat);
  return {static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])};
}

bool inside_brain(const GridDims& dims, const Point& p) {
  const double n[3] = {static_cast<double>(dims.nx), static_cast<double>(dims.ny), static_cast<double>(dims.nz)};
  double r = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double center = (n[k] - 1.0) / 2.0;
    const double semi = 0.45 * n[k];
    r += (p[k] - center) * (p[k] - center) / (semi * semi);
  }
  return r <= 1.0;
}

double distance_to_segment(const Point& p, const Point& a, const Point& b) {
  Point ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1] + (p[2] - a[2]) * ab[2]) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const Point q{a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]};
  return std::sqrt(squared_distance(p, q));
}

std::vector<EdgeKey> all_pairs(int regions) {
  std::vector<EdgeKey> pairs;
  for (int i = 1; i <= regions; ++i) {
    for (int j = i + 1; j <= regions; ++j) pairs.push_back({i, j});
  }
  return pairs;
}

/// Labels in cohort order: a seeded shuffle of the configured class counts.
std::vector<int> cohort_labels(const SynthConfig& config, Rng& rng) {
  std::vector<int> labels(config.mutant_subjects, kMutant);
  labels.insert(labels.end(), config.wild_type_subjects, kWildType);
  rng.shuffle(std::span<int>(labels));
  return labels;
}

std::string subject_id(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%03zu", s);
  return buf;
}

template <typename T>
std::vector<T> sample_without_replacement(const std::vector<T>& items, std::size_t k, Rng& rng) {
  std::vector<T> pool = items;
  rng.shuffle(std::span<T>(pool));
  pool.resize(std::min(k, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Shared edge template of the graph-level cohort (0-based node pairs).
std::vector<EdgeKey> graph_template(const SynthConfig& config) {
  Rng rng(derive_seed(config.seed, "synth.graph.template"));
  std::vector<EdgeKey> edges;
  const auto n = static_cast<int>(config.graph_nodes);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (config.graph_edge_density >= 1.0 || rng.bernoulli(config.graph_edge_density)) edges.push_back({i, j});
    }
  }
  return edges;
}

BrainGraph background_graph(const SynthConfig& config, const std::vector<EdgeKey>& edges, Rng& rng) {
  BrainGraph g;
  g.node_features = Tensor({config.graph_nodes, config.node_dim});
  for (double& v : g.node_features.data()) v = rng.uniform(config.background_low, config.background_high);
  g.edges = edges;
  g.edge_features = Tensor({edges.size(), config.edge_dim});
  for (double& v : g.edge_features.data()) v = rng.uniform(config.background_low, config.background_high);
  return g;
}

}  // namespace

AtlasPair generate_atlas_pair(const SynthConfig& config) {
  config.validate();
  const GridDims dims = config.grid;
  const std::array<double, 3> voxel_size{config.voxel_size_mm, config.voxel_size_mm, config.voxel_size_mm};
  Rng rng(derive_seed(config.seed, "synth.atlas"));

  std::vector<std::size_t> brain;
  for (std::size_t v = 0; v < dims.count(); ++v) {
    if (inside_brain(dims, voxel_center(dims, v))) brain.push_back(v);
  }
  const auto r = static_cast<std::size_t>(config.regions);
  if (brain.size() < r * config.min_region_voxels) {
    throw DataError("synth: grid too small for " + std::to_string(r) + " regions of " +
                    std::to_string(config.min_region_voxels) + " voxels");
  }

  // Seed points with a minimum spacing that relaxes when sampling stalls.
  double spacing = 0.8 * std::cbrt(static_cast<double>(brain.size()) / static_cast<double>(r));
  std::vector<Point> seeds;
  std::size_t failures = 0;
  while (seeds.size() < r) {
    const Point p = voxel_center(dims, brain[rng.below(brain.size())]);
    const bool ok = std::all_of(seeds.begin(), seeds.end(),
                                [&](const Point& s) { return squared_distance(s, p) >= spacing * spacing; });
    if (ok) {
      seeds.push_back(p);
      failures = 0;
    } else if (++failures > 1000) {
      spacing *= 0.9;
      failures = 0;
    }
  }

  std::vector<float> labels(dims.count(), 0.0f);
  std::vector<Point> centroid(r, Point{0, 0, 0});
  std::vector<std::size_t> counts(r, 0);
  for (auto v : brain) {
    const Point p = voxel_center(dims, v);
    std::size_t best = 0;
    for (std::size_t k = 1; k < r; ++k) {
      if (squared_distance(p, seeds[k]) < squared_distance(p, seeds[best])) best = k;
    }
    labels[v] = static_cast<float>(best + 1);
    for (int a = 0; a < 3; ++a) centroid[best][a] += p[a];
    counts[best] += 1;
  }
  for (std::size_t k = 0; k < r; ++k) {
    if (counts[k] < config.min_region_voxels) {
      throw DataError("synth: region " + std::to_string(k + 1) + " has only " + std::to_string(counts[k]) +
                      " voxels; grid too small for the requested regions");
    }
    for (int a = 0; a < 3; ++a) centroid[k][a] /= static_cast<double>(counts[k]);
  }
  NodeAtlas node_atlas(Volume(dims, voxel_size, std::move(labels)), config.regions);

  // Decide which subjects miss which pairs.
  const auto pairs = all_pairs(config.regions);
  std::vector<EdgeKey> shuffled = pairs;
  rng.shuffle(std::span<EdgeKey>(shuffled));
  const std::size_t s_count = config.atlas_subjects;
  std::map<EdgeKey, std::vector<bool>> missing;
  for (std::size_t k = 0; k < config.absent_pairs + config.flaky_pairs; ++k) {
    const std::size_t miss =
        k < config.absent_pairs ? 2 + static_cast<std::size_t>(rng.below(s_count - 1)) : std::size_t{1};
    std::vector<std::size_t> subjects(s_count);
    std::iota(subjects.begin(), subjects.end(), 0);
    rng.shuffle(std::span<std::size_t>(subjects));
    std::vector<bool> flags(s_count, false);
    for (std::size_t m = 0; m < miss; ++m) flags[subjects[m]] = true;
    missing[shuffled[k]] = flags;
  }

  TractDensitySet densities;
  densities.dims = dims;
  const double radius = config.tract_radius;
  const double reach = 3.5 * radius;
  for (std::size_t s = 0; s < s_count; ++s) {
    std::map<EdgeKey, Volume> subject;
    for (const auto& pair : pairs) {
      auto it = missing.find(pair);
      if (it != missing.end() && it->second[s]) continue;
      Point a = centroid[static_cast<std::size_t>(pair.first - 1)];
      Point b = centroid[static_cast<std::size_t>(pair.second - 1)];
      for (int k = 0; k < 3; ++k) {
        a[k] += rng.normal(0.0, 0.5);
        b[k] += rng.normal(0.0, 0.5);
      }
      const double peak = config.tract_peak * std::max(0.1, 1.0 + 0.1 * rng.normal());
      std::vector<float> density(dims.count(), 0.0f);
      for (std::size_t v = 0; v < dims.count(); ++v) {
        const Point p = voxel_center(dims, v);
        const double d = distance_to_segment(p, a, b);
        if (d > reach) continue;
        const double expected = peak * std::exp(-d * d / (2.0 * radius * radius));
        density[v] = static_cast<float>(std::floor(expected + rng.uniform()));
      }
      // the voxel nearest the tube midpoint always carries tracts
      const Point mid{(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2};
      std::size_t center = dims.index(
          static_cast<std::size_t>(std::clamp(std::lround(mid[0]), 0L, static_cast<long>(dims.nx) - 1)),
          static_cast<std::size_t>(std::clamp(std::lround(mid[1]), 0L, static_cast<long>(dims.ny) - 1)),
          static_cast<std::size_t>(std::clamp(std::lround(mid[2]), 0L, static_cast<long>(dims.nz) - 1)));
      density[center] = std::max(density[center], 1.0f);
      subject.emplace(pair, Volume(dims, voxel_size, std::move(density)));
    }
    densities.subjects.push_back(std::move(subject));
  }
  return {std::move(node_atlas), std::move(densities)};
}

PhantomCohort generate_phantom_cohort(const SynthConfig& config, const NodeAtlas& node_atlas,
                                      const EdgeAtlas& edge_atlas) {
  config.validate();
  const GridDims dims = node_atlas.labels().dims();
  if (edge_atlas.dims() != dims) throw DimensionError("synth: node and edge atlas grids differ");
  const auto& atlas_edges = edge_atlas.edges();
  const std::size_t max_affected = std::max(config.mutant.affected_edges, config.wild_type.affected_edges);
  if (max_affected > atlas_edges.size()) {
    throw DataError("synth: " + std::to_string(max_affected) + " affected edges requested but the atlas has " +
                    std::to_string(atlas_edges.size()));
  }

  Rng layout_rng(derive_seed(config.seed, "synth.phantom.layout"));
  constexpr std::array<double, kModalityCount> baseline{0.50, 0.60, 0.40, 0.55};
  const int r = node_atlas.region_count();
  std::vector<std::array<double, kModalityCount>> region_offset(static_cast<std::size_t>(r) + 1);
  for (auto& offsets : region_offset) {
    for (double& o : offsets) o = layout_rng.uniform(-0.1, 0.1);
  }
  const std::vector<int> labels = cohort_labels(config, layout_rng);
  const auto label_data = node_atlas.labels().data();
  const std::array<double, 3> voxel_size = node_atlas.labels().voxel_size_mm();

  PhantomCohort cohort;
  cohort.truth.seed = config.seed;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const std::string id = subject_id(s);
    Rng rng(derive_seed(config.seed, "synth.phantom." + id));
    const ClassInvasion& invasion = labels[s] == kMutant ? config.mutant : config.wild_type;
    const auto affected = sample_without_replacement(atlas_edges, invasion.affected_edges, rng);

    std::vector<char> shifted(dims.count(), 0);
    for (const auto& e : affected) {
      for (auto v : edge_atlas.edge_mask(e.first, e.second).indices()) shifted[v] = 1;
    }
    for (std::size_t v = 0; v < dims.count(); ++v) {
      const auto region = static_cast<int>(label_data[v]);
      if (region == 0) continue;
      for (const auto& e : affected) {
        if (region == e.first || region == e.second) shifted[v] = 1;
      }
    }

    std::array<Volume, kModalityCount> modalities;
    for (std::size_t m = 0; m < kModalityCount; ++m) {
      std::vector<float> data(dims.count(), 0.0f);
      for (std::size_t v = 0; v < dims.count(); ++v) {
        const auto region = static_cast<std::size_t>(label_data[v]);
        if (region == 0) continue;
        double value = baseline[m] + region_offset[region][m];
        if (shifted[v]) value += invasion.amplitude;
        if (config.noise > 0.0) value += rng.normal(0.0, config.noise);
        data[v] = static_cast<float>(value);
      }
      modalities[m] = Volume(dims, voxel_size, std::move(data));
    }
    cohort.subjects.push_back({id, labels[s], MultiModalScan(std::move(modalities))});
    cohort.truth.subjects.push_back({id, labels[s], affected, invasion.amplitude});
  }
  return cohort;
}

GraphCohort generate_graph_cohort(const SynthConfig& config) {
  config.validate();
  const auto edges = graph_template(config);
  const std::size_t max_affected = std::max(config.mutant.affected_edges, config.wild_type.affected_edges);
  if (max_affected > edges.size()) throw DataError("synth: more affected edges than template edges");

  Rng label_rng(derive_seed(config.seed, "synth.graph.labels"));
  const std::vector<int> labels = cohort_labels(config, label_rng);
  GraphCohort cohort;
  cohort.dataset.nodes = config.graph_nodes;
  cohort.dataset.latent_dim = config.edge_dim;
  cohort.truth.seed = config.seed;
  std::vector<std::size_t> edge_ids(edges.size());
  std::iota(edge_ids.begin(), edge_ids.end(), 0);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const std::string id = subject_id(s);
    Rng rng(derive_seed(config.seed, "synth.graph." + id));
    BrainGraph g = background_graph(config, edges, rng);
    g.id = id;
    g.label = labels[s];
    const ClassInvasion& invasion = labels[s] == kMutant ? config.mutant : config.wild_type;
    SubjectTruth truth{id, labels[s], {}, invasion.amplitude};
    for (auto e : sample_without_replacement(edge_ids, invasion.affected_edges, rng)) {
      for (double& v : g.edge_features.row(e)) v += invasion.amplitude;
      truth.affected_edges.push_back(edges[e]);
    }
    cohort.dataset.graphs.push_back(std::move(g));
    cohort.truth.subjects.push_back(std::move(truth));
  }
  return cohort;
}

PlantedGraph generate_planted_graph(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const auto edges = graph_template(config);
  Rng rng(seed);
  PlantedGraph out;
  out.graph = background_graph(config, edges, rng);
  out.graph.id = "planted-" + std::to_string(seed);
  out.graph.label = kWildType;
  out.planted_edge = static_cast<std::size_t>(rng.below(edges.size()));
  for (double& v : out.graph.edge_features.row(out.planted_edge)) v += config.wild_type.amplitude;
  return out;
}

}  // namespace idhnet
