#include "idhnet/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "idhnet/checkpoint.hpp"
#include "idhnet/errors.hpp"
#include "idhnet/layers.hpp"

namespace idhnet {
namespace {

void check_conv_inputs(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& edge_features,
                       const Tensor& x) {
  if (layer.theta2.empty()) throw DimensionError("graph_conv: layer has no Θ2");
  for (const auto& t2 : layer.theta2) {
    if (!t2.same_shape(layer.theta1)) throw DimensionError("graph_conv: Θ1 and Θ2 shapes differ");
  }
  if (x.rank() != 2 || x.cols() != layer.theta1.rows()) {
    throw DimensionError("graph_conv: node features " + x.shape_string() + " do not match Θ1 " +
                         layer.theta1.shape_string());
  }
  if (edge_features.rank() != 2 || edge_features.rows() != graph.edges.size()) {
    throw DimensionError("graph_conv: need one edge-feature row per edge");
  }
  if (layer.mode() == Theta2Mode::PerChannel && edge_features.cols() != layer.theta2.size()) {
    throw DimensionError("graph_conv: per-channel Θ2 count " + std::to_string(layer.theta2.size()) +
                         " differs from edge feature width " + std::to_string(edge_features.cols()));
  }
  const auto n = static_cast<int>(x.rows());
  for (const auto& e : graph.edges) {
    if (e.first < 0 || e.second < 0 || e.first >= n || e.second >= n) {
      throw DataError("graph_conv: edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                      ") references a node >= " + std::to_string(n));
    }
  }
}

/// Edge weight seen by channel z, or the channel sum when z < 0.
double edge_weight(const Tensor& edge_features, std::size_t e, int z) {
  if (z >= 0) return edge_features(e, static_cast<std::size_t>(z));
  double s = 0.0;
  for (double v : edge_features.row(e)) s += v;
  return s;
}

/// Σ_{j∈N(i)} w_{ji} x_j for every node i, each undirected edge sending
/// a message in both directions.
Tensor aggregate(const BrainGraph& graph, const Tensor& edge_features, const Tensor& x, int z) {
  Tensor agg({x.rows(), x.cols()});
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const double w = edge_weight(edge_features, e, z);
    if (w == 0.0) continue;
    const auto a = static_cast<std::size_t>(graph.edges[e].first);
    const auto b = static_cast<std::size_t>(graph.edges[e].second);
    auto xa = x.row(a);
    auto xb = x.row(b);
    auto ga = agg.row(a);
    auto gb = agg.row(b);
    for (std::size_t k = 0; k < xa.size(); ++k) {
      gb[k] += w * xa[k];
      ga[k] += w * xb[k];
    }
  }
  return agg;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

Tensor as_row_matrix(const Tensor& t) { return Tensor({1, t.size()}, std::vector<double>(t.data().begin(), t.data().end())); }

std::string conv_name(std::size_t l, const char* what) { return "conv" + std::to_string(l) + "." + what; }

}  // namespace

Tensor graph_conv_preactivation(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& edge_features,
                                const Tensor& x) {
  check_conv_inputs(layer, graph, edge_features, x);
  Tensor out = matmul(x, layer.theta1);
  if (layer.mode() == Theta2Mode::Shared) {
    axpy(1.0, matmul(aggregate(graph, edge_features, x, -1), layer.theta2[0]), out);
  } else {
    for (std::size_t z = 0; z < layer.theta2.size(); ++z) {
      axpy(1.0, matmul(aggregate(graph, edge_features, x, static_cast<int>(z)), layer.theta2[z]), out);
    }
  }
  return out;
}

Tensor graph_conv_preactivation(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& x) {
  return graph_conv_preactivation(layer, graph, graph.edge_features, x);
}

Tensor graph_conv(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& x) {
  return relu(graph_conv_preactivation(layer, graph, x));
}

GraphConvGrads graph_conv_backward(const GraphConvLayer& layer, const BrainGraph& graph,
                                   const Tensor& edge_features, const Tensor& x, const Tensor& grad_pre) {
  check_conv_inputs(layer, graph, edge_features, x);
  GraphConvGrads g;
  g.theta1 = matmul_tn(x, grad_pre);
  g.input = matmul_nt(grad_pre, layer.theta1);
  g.edge_features = Tensor({graph.edges.size(), edge_features.cols()});

  const bool shared = layer.mode() == Theta2Mode::Shared;
  const std::size_t channels = layer.theta2.size();
  for (std::size_t c = 0; c < channels; ++c) {
    const int z = shared ? -1 : static_cast<int>(c);
    g.theta2.push_back(matmul_tn(aggregate(graph, edge_features, x, z), grad_pre));
    // back-projected gradient seen by every incoming message
    const Tensor back = matmul_nt(grad_pre, layer.theta2[c]);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto a = static_cast<std::size_t>(graph.edges[e].first);
      const auto b = static_cast<std::size_t>(graph.edges[e].second);
      const double w = edge_weight(edge_features, e, z);
      auto dxa = g.input.row(a);
      auto dxb = g.input.row(b);
      auto ba = back.row(a);
      auto bb = back.row(b);
      for (std::size_t k = 0; k < dxa.size(); ++k) {
        dxa[k] += w * bb[k];
        dxb[k] += w * ba[k];
      }
      const double dw = dot(bb, x.row(a)) + dot(ba, x.row(b));
      if (shared) {
        for (double& v : g.edge_features.row(e)) v += dw;
      } else {
        g.edge_features(e, c) += dw;
      }
    }
  }
  return g;
}

Tensor graph_embed(const EmbedLayer& layer, const Tensor& x) {
  if (x.rank() != 2 || x.rows() == 0) throw DimensionError("graph_embed: need at least one node");
  if (x.cols() != layer.theta.rows()) {
    throw DimensionError("graph_embed: node width " + std::to_string(x.cols()) + " != Θ axis 0 (" +
                         std::to_string(layer.theta.rows()) + ")");
  }
  return as_row_matrix(column_sums(matmul(x, layer.theta)));
}

void GnnArch::validate() const {
  if (conv_widths.size() != 3) throw DataError("GNN architecture requires exactly 3 convolution layers");
  if (node_dim == 0 || edge_dim == 0 || embed_width == 0 || hidden_width == 0) {
    throw DataError("GNN widths must be positive");
  }
  for (auto w : conv_widths) {
    if (w == 0) throw DataError("GNN widths must be positive");
  }
}

void to_json(nlohmann::json& j, const GnnArch& a) {
  j = {{"node_dim", a.node_dim},
       {"edge_dim", a.edge_dim},
       {"conv_widths", a.conv_widths},
       {"embed_width", a.embed_width},
       {"hidden_width", a.hidden_width},
       {"theta2_mode", a.mode == Theta2Mode::Shared ? "shared" : "per_channel"}};
}

void from_json(const nlohmann::json& j, GnnArch& a) {
  a.node_dim = j.value("node_dim", a.node_dim);
  a.edge_dim = j.value("edge_dim", a.edge_dim);
  a.conv_widths = j.value("conv_widths", a.conv_widths);
  a.embed_width = j.value("embed_width", a.embed_width);
  a.hidden_width = j.value("hidden_width", a.hidden_width);
  const std::string mode = j.value("theta2_mode", std::string(a.mode == Theta2Mode::Shared ? "shared" : "per_channel"));
  if (mode == "shared") {
    a.mode = Theta2Mode::Shared;
  } else if (mode == "per_channel") {
    a.mode = Theta2Mode::PerChannel;
  } else {
    throw FormatError("theta2_mode must be 'shared' or 'per_channel'");
  }
}

GnnModel::GnnModel(const GnnArch& arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  Rng rng(seed);
  std::size_t in = arch_.node_dim;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t out = arch_.conv_widths[l];
    params_.add(conv_name(l, "theta1"), glorot_uniform(in, out, rng));
    if (arch_.mode == Theta2Mode::Shared) {
      params_.add(conv_name(l, "theta2"), glorot_uniform(in, out, rng));
    } else {
      for (std::size_t z = 0; z < arch_.edge_dim; ++z) {
        params_.add(conv_name(l, "theta2.") + std::to_string(z), glorot_uniform(in, out, rng));
      }
    }
    in = out;
  }
  params_.add("embed.theta", glorot_uniform(in, arch_.embed_width, rng));
  params_.add("fc1.W", glorot_uniform(arch_.embed_width, arch_.hidden_width, rng));
  params_.add("fc1.b", Tensor({arch_.hidden_width}));
  params_.add("fc2.W", glorot_uniform(arch_.hidden_width, 1, rng));
  params_.add("fc2.b", Tensor({1}));
}

GnnModel::GnnModel(const GnnArch& arch, ParamSet params) : arch_(arch), params_(std::move(params)) {
  arch_.validate();
  GnnModel reference(arch_, 0);
  for (const auto& [name, value] : reference.params().values()) {
    if (!params_.contains(name) || !params_.value(name).same_shape(value)) {
      throw CheckpointMismatchError("parameter '" + name + "' missing or mis-shaped for this architecture");
    }
  }
}

GraphConvLayer GnnModel::conv_layer(std::size_t l) const {
  GraphConvLayer layer;
  layer.theta1 = params_.value(conv_name(l, "theta1"));
  if (arch_.mode == Theta2Mode::Shared) {
    layer.theta2.push_back(params_.value(conv_name(l, "theta2")));
  } else {
    for (std::size_t z = 0; z < arch_.edge_dim; ++z) {
      layer.theta2.push_back(params_.value(conv_name(l, "theta2.") + std::to_string(z)));
    }
  }
  return layer;
}

EmbedLayer GnnModel::embed_layer() const { return {params_.value("embed.theta")}; }

GnnModel::Trace GnnModel::forward(const BrainGraph& graph, const Tensor& edge_features, Rng* dropout_rng,
                                  double dropout) const {
  if (graph.node_features.cols() != arch_.node_dim) {
    throw DimensionError("GNN expects " + std::to_string(arch_.node_dim) + " node features, graph '" + graph.id +
                         "' has " + std::to_string(graph.node_features.cols()));
  }
  if (edge_features.rank() == 2 && edge_features.cols() != arch_.edge_dim && !graph.edges.empty()) {
    throw DimensionError("GNN expects " + std::to_string(arch_.edge_dim) + " edge features, graph '" + graph.id +
                         "' has " + std::to_string(edge_features.cols()));
  }
  Trace t;
  t.graph = &graph;
  t.edge_features = edge_features;
  t.hidden.push_back(graph.node_features);
  for (std::size_t l = 0; l < 3; ++l) {
    t.hidden.push_back(relu(graph_conv_preactivation(conv_layer(l), graph, edge_features, t.hidden.back())));
  }
  t.node_sum = as_row_matrix(column_sums(t.hidden.back()));
  t.embedding = graph_embed(embed_layer(), t.hidden.back());
  t.fc1_out = relu(affine_forward(t.embedding, params_.value("fc1.W"), params_.value("fc1.b")));
  const bool training = dropout_rng != nullptr && dropout > 0.0;
  t.fc1_mask = training ? dropout_mask(t.fc1_out.shape(), dropout, *dropout_rng) : Tensor(t.fc1_out.shape(), 1.0);
  t.fc1_dropped = hadamard(t.fc1_out, t.fc1_mask);
  const Tensor fc2 = affine_forward(t.fc1_dropped, params_.value("fc2.W"), params_.value("fc2.b"));
  t.fc2_mask = training ? dropout_mask(fc2.shape(), dropout, *dropout_rng) : Tensor(fc2.shape(), 1.0);
  t.logit = fc2[0] * t.fc2_mask[0];
  t.probability = sigmoid(t.logit);
  return t;
}

Tensor GnnModel::backward(const Trace& t, double grad_logit, ParamSet& grads) const {
  const BrainGraph& graph = *t.graph;
  const Tensor d_fc2({1, 1}, std::vector<double>{grad_logit * t.fc2_mask[0]});
  AffineGrads g2 = affine_backward(t.fc1_dropped, params_.value("fc2.W"), d_fc2);
  grads.accumulate_grad("fc2.W", g2.weight);
  grads.accumulate_grad("fc2.b", g2.bias);

  const Tensor d_fc1 = relu_backward(t.fc1_out, hadamard(g2.input, t.fc1_mask));
  AffineGrads g1 = affine_backward(t.embedding, params_.value("fc1.W"), d_fc1);
  grads.accumulate_grad("fc1.W", g1.weight);
  grads.accumulate_grad("fc1.b", g1.bias);

  const Tensor& theta = params_.value("embed.theta");
  grads.accumulate_grad("embed.theta", matmul_tn(t.node_sum, g1.input));
  const Tensor d_node = matmul_nt(g1.input, theta);  // 1×D, identical for every node
  Tensor d_hidden({graph.num_nodes(), d_node.cols()});
  for (std::size_t i = 0; i < d_hidden.rows(); ++i) {
    std::copy(d_node.data().begin(), d_node.data().end(), d_hidden.row(i).begin());
  }

  Tensor d_edges({graph.edges.size(), t.edge_features.cols()});
  for (std::size_t l = 3; l-- > 0;) {
    const Tensor d_pre = relu_backward(t.hidden[l + 1], d_hidden);
    const GraphConvLayer layer = conv_layer(l);
    GraphConvGrads cg = graph_conv_backward(layer, graph, t.edge_features, t.hidden[l], d_pre);
    grads.accumulate_grad(conv_name(l, "theta1"), cg.theta1);
    if (arch_.mode == Theta2Mode::Shared) {
      grads.accumulate_grad(conv_name(l, "theta2"), cg.theta2[0]);
    } else {
      for (std::size_t z = 0; z < cg.theta2.size(); ++z) {
        grads.accumulate_grad(conv_name(l, "theta2.") + std::to_string(z), cg.theta2[z]);
      }
    }
    axpy(1.0, cg.edge_features, d_edges);
    d_hidden = std::move(cg.input);
  }
  return d_edges;
}

double gnn_forward(const GnnModel& model, const BrainGraph& graph) {
  return model.forward(graph, graph.edge_features).probability;
}

namespace {

struct Moments {
  double mean = 0.0;
  double rms = 0.0;  // about zero
  double sd = 0.0;   // about the mean
};

Moments moments(const std::vector<double>& values) {
  Moments m;
  if (values.empty()) return m;
  const auto n = static_cast<double>(values.size());
  double sum = 0.0, sq = 0.0;
  for (double v : values) {
    sum += v;
    sq += v * v;
  }
  m.mean = sum / n;
  m.rms = std::sqrt(sq / n);
  m.sd = std::sqrt(std::max(0.0, sq / n - m.mean * m.mean));
  return m;
}

void scale_parameter(ParamSet& params, const std::string& name, double factor) {
  for (double& v : params.value(name).data()) v *= factor;
}

template <typename Collect>
Moments collect_moments(const GnnModel& model, std::span<const BrainGraph> graphs, Collect collect) {
  std::vector<double> values;
  for (const auto& g : graphs) collect(model.forward(g, g.edge_features), values);
  return moments(values);
}

/// Bias-free stage: divide the weights by the pre-activation RMS.
template <typename Collect>
void scale_stage(GnnModel& model, std::span<const BrainGraph> graphs, const std::vector<std::string>& names,
                 Collect collect) {
  const Moments m = collect_moments(model, graphs, collect);
  if (!(m.rms > 0.0) || !std::isfinite(m.rms)) return;
  for (const auto& name : names) scale_parameter(model.params(), name, 1.0 / m.rms);
}

/// Affine stage: per output unit, zero mean and unit deviation over the graphs.
void standardize_affine(GnnModel& model, std::span<const BrainGraph> graphs, const std::string& weight,
                        const std::string& bias, const std::function<const Tensor&(const GnnModel::Trace&)>& input) {
  const std::size_t units = model.params().value(weight).cols();
  std::vector<std::vector<double>> per_unit(units);
  for (const auto& g : graphs) {
    const auto trace = model.forward(g, g.edge_features);
    const Tensor pre = affine_forward(input(trace), model.params().value(weight), model.params().value(bias));
    for (std::size_t k = 0; k < units; ++k) per_unit[k].push_back(pre[k]);
  }
  Tensor& w = model.params().value(weight);
  Tensor& b = model.params().value(bias);
  for (std::size_t k = 0; k < units; ++k) {
    const Moments m = moments(per_unit[k]);
    if (!(m.sd > 1e-12) || !std::isfinite(m.sd)) continue;
    for (std::size_t r = 0; r < w.rows(); ++r) w(r, k) /= m.sd;
    b[k] = (b[k] - m.mean) / m.sd;
  }
}

}  // namespace

void rescale_to_unit_activations(GnnModel& model, std::span<const BrainGraph> graphs) {
  if (graphs.empty()) return;
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<std::string> names{conv_name(l, "theta1")};
    for (const auto& [name, value] : model.params().values()) {
      if (name.rfind(conv_name(l, "theta2"), 0) == 0) names.push_back(name);
    }
    const GraphConvLayer layer = model.conv_layer(l);
    scale_stage(model, graphs, names, [&](const GnnModel::Trace& t, std::vector<double>& out) {
      const Tensor pre = graph_conv_preactivation(layer, *t.graph, t.edge_features, t.hidden[l]);
      out.insert(out.end(), pre.data().begin(), pre.data().end());
    });
  }
  scale_stage(model, graphs, {"embed.theta"}, [](const GnnModel::Trace& t, std::vector<double>& out) {
    out.insert(out.end(), t.embedding.data().begin(), t.embedding.data().end());
  });
  standardize_affine(model, graphs, "fc1.W", "fc1.b", [](const GnnModel::Trace& t) -> const Tensor& { return t.embedding; });
  standardize_affine(model, graphs, "fc2.W", "fc2.b", [](const GnnModel::Trace& t) -> const Tensor& { return t.fc1_out; });
}

ClassWeights class_weights(std::size_t mutant_count, std::size_t wild_type_count) {
  if (mutant_count == 0 || wild_type_count == 0) throw DataError("class_weights: both classes must be present");
  const auto total = static_cast<double>(mutant_count + wild_type_count);
  return {total / (2.0 * static_cast<double>(mutant_count)), total / (2.0 * static_cast<double>(wild_type_count))};
}

double weighted_bce(double p, int y, const ClassWeights& w) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return y == kMutant ? -w.mutant * std::log(q) : -w.wild_type * std::log(1.0 - q);
}

double weighted_bce_grad_logit(double p, int y, const ClassWeights& w) {
  return y == kMutant ? w.mutant * (p - 1.0) : w.wild_type * p;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw DataError("lr_decay_factor must lie in (0, 1]");
  if (lr_patience < 1 || stop_patience < 1) throw DataError("patience values must be >= 1");
  if (weight_decay < 0.0) throw DataError("weight_decay must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must lie in [0, 1)");
  if (edge_drop < 0.0 || edge_drop >= 1.0) throw DataError("edge_drop must lie in [0, 1)");
  if (max_epochs < 1 || batch_size < 1) throw DataError("max_epochs and batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"lr_decay_factor", c.lr_decay_factor},
       {"lr_patience", c.lr_patience},     {"stop_patience", c.stop_patience},
       {"weight_decay", c.weight_decay},   {"dropout", c.dropout},
       {"edge_drop", c.edge_drop},         {"max_epochs", c.max_epochs},
       {"batch_size", c.batch_size},       {"seed", c.seed}};
  if (c.weights) {
    j["class_weights"] = {{"mutant", c.weights->mutant}, {"wild_type", c.weights->wild_type}};
  } else {
    j["class_weights"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_patience = j.value("lr_patience", c.lr_patience);
  c.stop_patience = j.value("stop_patience", c.stop_patience);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout = j.value("dropout", c.dropout);
  c.edge_drop = j.value("edge_drop", c.edge_drop);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("class_weights") && !j["class_weights"].is_null()) {
    c.weights = ClassWeights{j["class_weights"].at("mutant").get<double>(),
                             j["class_weights"].at("wild_type").get<double>()};
  }
}

double mean_loss(const GnnModel& model, std::span<const BrainGraph> graphs, const ClassWeights& w) {
  if (graphs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : graphs) total += weighted_bce(gnn_forward(model, g), g.label, w);
  return total / static_cast<double>(graphs.size());
}

TrainResult train_gnn(std::span<const BrainGraph> train, std::span<const BrainGraph> val, const GnnArch& arch,
                      const TrainConfig& config) {
  config.validate();
  if (train.empty() || val.empty()) throw DataError("train_gnn: train and validation sets must be non-empty");

  std::size_t mutants = 0;
  for (const auto& g : train) mutants += g.label == kMutant ? 1 : 0;
  const ClassWeights weights = config.weights ? *config.weights : class_weights(mutants, train.size() - mutants);

  TrainResult result;
  result.weights = weights;
  GnnModel model(arch, derive_seed(config.seed, "gnn.init"));
  rescale_to_unit_activations(model, train);
  Rng order_rng(derive_seed(config.seed, "gnn.order"));
  Rng edge_rng(derive_seed(config.seed, "gnn.edge_drop"));
  Rng dropout_rng(derive_seed(config.seed, "gnn.dropout"));
  AdamState adam;
  adam.config.learning_rate = config.learning_rate;
  adam.config.weight_decay = config.weight_decay;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  result.model = model;
  std::size_t since_improvement = 0;
  std::size_t since_decay = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const auto batch = static_cast<double>(stop - start);
      model.params().zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const BrainGraph& source = train[order[k]];
        const BrainGraph g = edge_drop(source, config.edge_drop, edge_rng);
        const auto trace = model.forward(g, g.edge_features, &dropout_rng, config.dropout);
        const double loss = weighted_bce(trace.probability, g.label, weights);
        if (!std::isfinite(loss)) {
          throw DivergenceError("GNN training loss is not finite at epoch " + std::to_string(epoch) + " (graph '" +
                                g.id + "')");
        }
        train_loss += loss;
        model.backward(trace, weighted_bce_grad_logit(trace.probability, g.label, weights) / batch, model.params());
      }
      adam_step(model.params(), adam);
    }
    train_loss /= static_cast<double>(order.size());

    const double val_loss = mean_loss(model, val, weights);
    if (!std::isfinite(val_loss)) {
      throw DivergenceError("GNN validation loss is not finite at epoch " + std::to_string(epoch));
    }
    result.log.push_back({epoch, train_loss, val_loss, adam.config.learning_rate});

    if (val_loss < best) {
      best = val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_improvement = 0;
      since_decay = 0;
    } else {
      ++since_improvement;
      ++since_decay;
      if (since_decay >= config.lr_patience) {
        adam.config.learning_rate *= config.lr_decay_factor;
        since_decay = 0;
      }
      if (since_improvement >= config.stop_patience) break;
    }
  }
  result.best_val_loss = best;
  return result;
}

double Metrics::accuracy() const {
  const std::size_t n = total();
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 * static_cast<double>(tp + tn) / static_cast<double>(n);
}

double Metrics::sensitivity() const {
  return tp + fn == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double Metrics::specificity() const {
  return tn + fp == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : 100.0 * static_cast<double>(tn) / static_cast<double>(tn + fp);
}

Metrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw DimensionError("metrics: prediction and label counts differ");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predicted[i] == kMutant;
    const bool truth = labels[i] == kMutant;
    if (pred && truth) ++m.tp;
    else if (pred && !truth) ++m.fp;
    else if (!pred && truth) ++m.fn;
    else ++m.tn;
  }
  return m;
}

Metrics evaluate(const GnnModel& model, std::span<const BrainGraph> graphs) {
  std::vector<int> predicted, labels;
  for (const auto& g : graphs) {
    predicted.push_back(gnn_forward(model, g) >= 0.5 ? kMutant : kWildType);
    labels.push_back(g.label);
  }
  return metrics_from_predictions(predicted, labels);
}

nlohmann::json metrics_json(const Metrics& m) {
  auto rate = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"accuracy", rate(m.accuracy())},
          {"sensitivity", rate(m.sensitivity())},
          {"specificity", rate(m.specificity())}};
}

std::string metrics_table(const Metrics& m, const std::string& method) {
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return std::string(buf);
  };
  char line[256];
  std::ostringstream os;
  std::snprintf(line, sizeof line, "%-24s %14s %17s %17s\n", "Methods", "Accuracy (%)", "Sensitivity (%)",
                "Specificity (%)");
  os << line;
  std::snprintf(line, sizeof line, "%-24s %14s %17s %17s\n", method.c_str(), cell(m.accuracy()).c_str(),
                cell(m.sensitivity()).c_str(), cell(m.specificity()).c_str());
  os << line;
  return os.str();
}

std::string config_hash(const GnnArch& arch, const TrainConfig& config) {
  const nlohmann::json doc = {{"arch", arch}, {"train", config}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

void save_gnn(const GnnModel& model, const TrainConfig& config, const nlohmann::json& extra,
              const std::filesystem::path& path) {
  Checkpoint ck;
  ck.header = extra;
  ck.header["kind"] = "gnn";
  ck.header["arch"] = model.arch();
  ck.header["config"] = config;
  ck.header["config_hash"] = config_hash(model.arch(), config);
  ck.tensors = model.params().values();
  save_checkpoint(path, ck);
}

LoadedGnn load_gnn(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.value("kind", "") != "gnn") throw FormatError("not a GNN checkpoint: " + path.string());
  LoadedGnn out;
  GnnArch arch;
  try {
    arch = ck.header.at("arch").get<GnnArch>();
    out.config = ck.header.at("config").get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed GNN checkpoint header: " + std::string(e.what()));
  }
  if (ck.header.value("config_hash", "") != config_hash(arch, out.config)) {
    throw CheckpointMismatchError("checkpoint config hash does not match its stored config: " + path.string());
  }
  ParamSet params;
  for (auto& [name, tensor] : ck.tensors) params.add(name, std::move(tensor));
  out.model = GnnModel(arch, std::move(params));
  out.header = std::move(ck.header);
  return out;
}

}  // namespace idhnet
