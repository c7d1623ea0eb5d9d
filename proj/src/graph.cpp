#include "idhnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "idhnet/errors.hpp"

namespace idhnet {

void BrainGraph::validate() const {
  if (node_features.rank() != 2 || node_features.rows() == 0) {
    throw DataError("graph '" + id + "': node features must be a non-empty N×D matrix");
  }
  if (edge_features.rank() != 2 || edge_features.rows() != edges.size()) {
    throw DataError("graph '" + id + "': need one edge-feature row per edge");
  }
  if (label != kMutant && label != kWildType) throw DataError("graph '" + id + "': label must be 0 or 1");
  const auto n = static_cast<int>(num_nodes());
  std::set<EdgeKey> seen;
  for (const auto& e : edges) {
    if (e.first == e.second) throw DataError("graph '" + id + "': self-loop on node " + std::to_string(e.first));
    if (e.first < 0 || e.second < 0 || e.first >= n || e.second >= n) {
      throw DataError("graph '" + id + "': edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                      ") references a node >= " + std::to_string(n));
    }
    if (!seen.insert(EdgeKey::of(e.first, e.second)).second) {
      throw DataError("graph '" + id + "': duplicate undirected edge");
    }
  }
  if (!node_features.all_finite() || !edge_features.all_finite()) {
    throw DataError("graph '" + id + "': non-finite feature");
  }
}

const BrainGraph& GraphDataset::find(const std::string& id) const {
  for (const auto& g : graphs) {
    if (g.id == id) return g;
  }
  throw LookupError("no graph with id '" + id + "'");
}

namespace {

nlohmann::json matrix_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Tensor matrix_from_json(const nlohmann::json& rows, std::size_t width) {
  std::vector<double> data;
  for (const auto& r : rows) {
    auto values = r.get<std::vector<double>>();
    if (values.size() != width) throw FormatError("feature row has " + std::to_string(values.size()) +
                                                  " values, expected " + std::to_string(width));
    data.insert(data.end(), values.begin(), values.end());
  }
  return Tensor({rows.size(), width}, std::move(data));
}

}  // namespace

void save_graph_dataset(const GraphDataset& dataset, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["nodes"] = dataset.nodes;
  doc["latent_dim"] = dataset.latent_dim;
  doc["graphs"] = nlohmann::json::array();
  for (const auto& g : dataset.graphs) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges) edges.push_back({e.first, e.second});
    doc["graphs"].push_back({{"id", g.id},
                             {"label", g.label},
                             {"node_features", matrix_json(g.node_features)},
                             {"edges", edges},
                             {"edge_features", matrix_json(g.edge_features)}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump() << '\n';
  if (!out) throw FormatError("failed writing dataset: " + path.string());
}

GraphDataset load_graph_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset: " + path.string());
  GraphDataset ds;
  try {
    const auto doc = nlohmann::json::parse(in);
    ds.nodes = doc.at("nodes").get<std::size_t>();
    ds.latent_dim = doc.at("latent_dim").get<std::size_t>();
    for (const auto& g : doc.at("graphs")) {
      BrainGraph graph;
      graph.id = g.at("id").get<std::string>();
      graph.label = g.at("label").get<int>();
      const auto& nf = g.at("node_features");
      const std::size_t node_dim = nf.empty() ? 0 : nf.front().size();
      graph.node_features = matrix_from_json(nf, node_dim);
      for (const auto& e : g.at("edges")) graph.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
      graph.edge_features = matrix_from_json(g.at("edge_features"), ds.latent_dim);
      graph.validate();
      ds.graphs.push_back(std::move(graph));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw FormatError(std::string("invalid dataset: ") + e.what());
  }
  return ds;
}

BrainGraph edge_drop(const BrainGraph& graph, double p_drop, Rng& rng) {
  if (p_drop < 0.0 || p_drop >= 1.0) throw DataError("edge_drop probability must lie in [0, 1)");
  if (p_drop == 0.0) return graph;
  BrainGraph out;
  out.id = graph.id;
  out.label = graph.label;
  out.node_features = graph.node_features;
  const std::size_t z = graph.edge_dim();
  std::vector<double> kept;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (rng.bernoulli(p_drop)) continue;
    out.edges.push_back(graph.edges[e]);
    auto row = graph.edge_features.row(e);
    kept.insert(kept.end(), row.begin(), row.end());
  }
  out.edge_features = Tensor({out.edges.size(), z}, std::move(kept));
  return out;
}

namespace {

/// Largest-remainder apportionment of `total` over classes by size.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& sizes) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> share(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(sizes[c]) / static_cast<double>(n);
    share[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += share[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) share[remainders[k].second] += 1;
  return share;
}

}  // namespace

CohortSplit split_cohort(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> classes(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kMutant && labels[i] != kWildType) throw DataError("split_cohort: labels must be 0 or 1");
    classes[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (const auto& c : classes) {
    if (c.size() < 5) throw DataError("split_cohort: every class needs at least 5 subjects");
  }
  Rng rng(seed);
  for (auto& c : classes) rng.shuffle(std::span<std::size_t>(c));

  const std::size_t n = labels.size();
  const auto test_total = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
  const auto test_share = apportion(test_total, {classes[0].size(), classes[1].size()});
  const std::size_t pool = n - test_total;
  const auto val_total = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(pool)));
  const auto val_share =
      apportion(val_total, {classes[0].size() - test_share[0], classes[1].size() - test_share[1]});

  CohortSplit split;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& members = classes[c];
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < test_share[c]) {
        split.test.push_back(members[k]);
      } else if (k < test_share[c] + val_share[c]) {
        split.val.push_back(members[k]);
      } else {
        split.train.push_back(members[k]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace idhnet
