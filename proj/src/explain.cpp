#include "idhnet/explain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "idhnet/errors.hpp"
#include "idhnet/layers.hpp"

namespace idhnet {

void ExplainConfig::validate() const {
  if (size_weight < 0.0 || entropy_weight < 0.0) throw DataError("explainer penalty weights must be >= 0");
  if (!(learning_rate > 0.0)) throw DataError("explainer learning rate must be positive");
}

void to_json(nlohmann::json& j, const ExplainConfig& c) {
  j = {{"size_weight", c.size_weight},
       {"entropy_weight", c.entropy_weight},
       {"iterations", c.iterations},
       {"learning_rate", c.learning_rate}};
}

void from_json(const nlohmann::json& j, ExplainConfig& c) {
  c.size_weight = j.value("size_weight", c.size_weight);
  c.entropy_weight = j.value("entropy_weight", c.entropy_weight);
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
}

Tensor masked_edge_features(const BrainGraph& graph, std::span<const double> scores) {
  if (scores.size() != graph.edges.size()) throw DimensionError("mask needs one score per edge");
  Tensor out = graph.edge_features;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    for (double& v : out.row(e)) v *= scores[e];
  }
  return out;
}

namespace {

double binary_entropy(double s) {
  const double a = std::clamp(s, 1e-12, 1.0 - 1e-12);
  return -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
}

}  // namespace

double explain_objective(const GnnModel& model, const BrainGraph& graph, std::span<const double> logits,
                         int target_class, const ExplainConfig& config, std::vector<double>* gradient) {
  const std::size_t edges = graph.edges.size();
  if (logits.size() != edges) throw DimensionError("explain_objective: one logit per edge required");
  std::vector<double> scores(edges);
  for (std::size_t e = 0; e < edges; ++e) scores[e] = sigmoid(logits[e]);

  const Tensor features = masked_edge_features(graph, scores);
  const auto trace = model.forward(graph, features);
  const double p = trace.probability;
  const double q = std::clamp(target_class == kMutant ? p : 1.0 - p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  double objective = std::log(q);
  for (std::size_t e = 0; e < edges; ++e) {
    objective -= config.size_weight * scores[e] + config.entropy_weight * binary_entropy(scores[e]);
  }

  if (gradient != nullptr) {
    // d ln P(ŷ)/d logit_out: (1 - p) for the mutant class, -p for wild-type
    const double d_out = target_class == kMutant ? 1.0 - p : -p;
    ParamSet scratch = model.params();
    const Tensor d_features = model.backward(trace, d_out, scratch);
    gradient->assign(edges, 0.0);
    for (std::size_t e = 0; e < edges; ++e) {
      const double s = scores[e];
      double d_score = 0.0;
      auto f = graph.edge_features.row(e);
      auto df = d_features.row(e);
      for (std::size_t z = 0; z < f.size(); ++z) d_score += f[z] * df[z];
      // dH/ds = ln((1-s)/s)
      d_score -= config.size_weight + config.entropy_weight * std::log((1.0 - s) / s);
      (*gradient)[e] = d_score * s * (1.0 - s);
    }
  }
  return objective;
}

EdgeMaskResult explain_edges(const GnnModel& model, const BrainGraph& graph, const ExplainConfig& config) {
  config.validate();
  graph.validate();
  EdgeMaskResult result;
  result.edges = graph.edges;
  result.explained_class = gnn_forward(model, graph) >= 0.5 ? kMutant : kWildType;

  const std::size_t edges = graph.edges.size();
  ParamSet mask;
  mask.add("logits", Tensor({edges}));
  AdamState adam;
  adam.config.learning_rate = config.learning_rate;
  std::vector<double> gradient;
  for (std::size_t it = 0; it <= config.iterations; ++it) {
    const Tensor& logits = mask.value("logits");
    const bool last = it == config.iterations;
    const double objective =
        explain_objective(model, graph, logits.data(), result.explained_class, config, last ? nullptr : &gradient);
    if (!std::isfinite(objective)) {
      throw DivergenceError("explainer objective is not finite at iteration " + std::to_string(it) + " (graph '" +
                            graph.id + "')");
    }
    result.objective.push_back(objective);
    if (last) break;
    // Adam minimizes, so step on the negated gradient.
    Tensor descent({edges});
    for (std::size_t e = 0; e < edges; ++e) descent[e] = -gradient[e];
    mask.set_grad("logits", std::move(descent));
    adam_step(mask, adam);
  }
  const Tensor& logits = mask.value("logits");
  for (std::size_t e = 0; e < edges; ++e) result.scores.push_back(sigmoid(logits[e]));
  return result;
}

Subnetwork threshold_subnetwork(const EdgeMaskResult& result, double threshold) {
  if (threshold < 0.0 || threshold >= 1.0) throw DataError("threshold must lie in [0, 1)");
  Subnetwork sub;
  sub.threshold = threshold;
  for (std::size_t e = 0; e < result.edges.size(); ++e) {
    if (result.scores[e] > threshold) sub.edges.push_back(result.edges[e]);
  }
  return sub;
}

Volume tract_density_map(const Subnetwork& subnetwork, const EdgeAtlas& atlas, int node_offset,
                         std::array<double, 3> voxel_size_mm) {
  Volume out(atlas.dims(), voxel_size_mm, 0.0f);
  for (const auto& e : subnetwork.edges) {
    const Mask& mask = atlas.edge_mask(e.first + node_offset, e.second + node_offset);
    for (auto v : mask.indices()) out[v] += 1.0f;
  }
  return out;
}

void save_edge_scores_csv(const EdgeMaskResult& result, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << "i,j,score\n";
  char buf[64];
  for (std::size_t e = 0; e < result.edges.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", result.scores[e]);
    out << result.edges[e].first << ',' << result.edges[e].second << ',' << buf << '\n';
  }
  if (!out) throw FormatError("failed writing edge scores: " + path.string());
}

}  // namespace idhnet
