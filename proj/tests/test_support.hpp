#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "idhnet/atlas.hpp"
#include "idhnet/gnn.hpp"
#include "idhnet/rng.hpp"
#include "idhnet/tensor.hpp"

namespace idhnet::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Random simple graph: every unordered pair is an edge with probability `density`.
inline BrainGraph random_graph(std::size_t nodes, std::size_t node_dim, std::size_t edge_dim, Rng& rng,
                               double density = 0.6) {
  BrainGraph g;
  g.id = "g";
  g.node_features = random_tensor({nodes, node_dim}, rng);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = i + 1; j < nodes; ++j) {
      if (rng.bernoulli(density)) g.edges.push_back(EdgeKey{static_cast<int>(i), static_cast<int>(j)});
    }
  }
  g.edge_features = random_tensor({g.edges.size(), edge_dim}, rng, 0.0, 1.0);
  g.label = rng.bernoulli(0.5) ? kMutant : kWildType;
  return g;
}

/// Relabels nodes: new index of old node i is perm[i]. Edge order is kept.
inline BrainGraph permute_nodes(const BrainGraph& g, const std::vector<std::size_t>& perm) {
  BrainGraph out = g;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t c = 0; c < g.node_features.cols(); ++c) out.node_features(perm[i], c) = g.node_features(i, c);
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    out.edges[e] = EdgeKey::of(static_cast<int>(perm[g.edges[e].first]), static_cast<int>(perm[g.edges[e].second]));
  }
  return out;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  rng.shuffle(std::span<std::size_t>(p));
  return p;
}

/// Explicit (i, j, z) loop over directed messages.
inline Tensor naive_graph_conv_pre(const Tensor& theta1, const std::vector<Tensor>& theta2, const BrainGraph& g,
                                   const Tensor& x) {
  const std::size_t n = x.rows(), din = x.cols(), dout = theta1.cols(), zdim = g.edge_dim();
  Tensor out({n, dout});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dout; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < din; ++d) acc += theta1(d, k) * x(i, d);
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        std::size_t j;
        if (static_cast<std::size_t>(g.edges[e].first) == i) {
          j = static_cast<std::size_t>(g.edges[e].second);
        } else if (static_cast<std::size_t>(g.edges[e].second) == i) {
          j = static_cast<std::size_t>(g.edges[e].first);
        } else {
          continue;
        }
        for (std::size_t z = 0; z < zdim; ++z) {
          const Tensor& t2 = theta2.size() == 1 ? theta2[0] : theta2[z];
          for (std::size_t d = 0; d < din; ++d) acc += t2(d, k) * g.edge_features(e, z) * x(j, d);
        }
      }
      out(i, k) = acc;
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("idhnet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Independent edge-atlas reference: recount quorum, average over all
/// subjects, sort positive means descending and keep everything at or above
/// the k-th largest value with k = ceil(fraction * count).
inline std::map<EdgeKey, std::vector<std::uint32_t>> brute_force_atlas(const TractDensitySet& set, int quorum,
                                                                      double fraction) {
  std::set<EdgeKey> keys;
  for (const auto& s : set.subjects) {
    for (const auto& [k, v] : s) keys.insert(k);
  }
  std::map<EdgeKey, std::vector<std::uint32_t>> out;
  const std::size_t voxels = set.dims.count();
  for (const auto& key : keys) {
    int present = 0;
    for (const auto& s : set.subjects) {
      auto it = s.find(key);
      if (it == s.end()) continue;
      bool any = false;
      for (float v : it->second.data()) any = any || v > 0.0f;
      present += any ? 1 : 0;
    }
    if (present < quorum) continue;
    std::vector<double> mean(voxels, 0.0);
    for (const auto& s : set.subjects) {
      auto it = s.find(key);
      if (it == s.end()) continue;
      for (std::size_t v = 0; v < voxels; ++v) mean[v] += it->second[v];
    }
    for (double& m : mean) m /= static_cast<double>(set.subjects.size());
    std::vector<double> positive;
    for (double m : mean) {
      if (m > 0.0) positive.push_back(m);
    }
    std::sort(positive.begin(), positive.end(), std::greater<>());
    const std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(positive.size()) - 1e-12));
    const double threshold = positive[std::max<std::size_t>(k, 1) - 1];
    std::vector<std::uint32_t> kept;
    for (std::size_t v = 0; v < voxels; ++v) {
      if (mean[v] > 0.0 && mean[v] >= threshold) kept.push_back(static_cast<std::uint32_t>(v));
    }
    out[key] = kept;
  }
  return out;
}

/// Random density set on a small grid: each subject carries each pair with
/// probability `presence`; values are small integers so ties occur.
inline TractDensitySet random_density_set(Rng& rng, std::size_t subjects, int regions, GridDims dims,
                                          double presence = 0.85) {
  TractDensitySet set;
  set.dims = dims;
  set.subjects.resize(subjects);
  for (auto& s : set.subjects) {
    for (int i = 1; i <= regions; ++i) {
      for (int j = i + 1; j <= regions; ++j) {
        if (!rng.bernoulli(presence)) continue;
        Volume v(dims);
        for (float& x : v.data()) x = rng.bernoulli(0.3) ? static_cast<float>(1 + rng.below(6)) : 0.0f;
        v[rng.below(dims.count())] = 1.0f;
        s.emplace(EdgeKey{i, j}, std::move(v));
      }
    }
  }
  return set;
}

}  // namespace idhnet::testing
