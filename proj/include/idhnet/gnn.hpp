#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idhnet/graph.hpp"
#include "idhnet/optim.hpp"

namespace idhnet {

/// How the edge-feature channels enter the convolution.
///  Shared: one Θ2 for all channels, so the channel sum collapses to a
///          scalar weight per message.
///  PerChannel: a distinct Θ2 per channel z.
enum class Theta2Mode { Shared, PerChannel };

/// Edge-featured graph convolution:
///   x_i' = Θ1ᵀ x_i + Σ_z Θ2_zᵀ Σ_{j∈N(i)} e_{j,i,z} x_j
/// theta2 holds one matrix (shared) or one per edge channel.
struct GraphConvLayer {
  Tensor theta1;               // D_in×D_out
  std::vector<Tensor> theta2;  // each D_in×D_out

  Theta2Mode mode() const { return theta2.size() == 1 ? Theta2Mode::Shared : Theta2Mode::PerChannel; }
};

/// Sum readout G = Σ_i Θᵀ x_i.
struct EmbedLayer {
  Tensor theta;  // D_in×D_g
};

/// Convolution before the ReLU, using the graph's own edge features.
Tensor graph_conv_preactivation(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& x);
/// Same with an explicit E×Z edge-feature matrix (e.g. masked features).
Tensor graph_conv_preactivation(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& edge_features,
                                const Tensor& x);
/// ReLU(graph_conv_preactivation(...)).
Tensor graph_conv(const GraphConvLayer& layer, const BrainGraph& graph, const Tensor& x);

struct GraphConvGrads {
  Tensor theta1;
  std::vector<Tensor> theta2;
  Tensor input;          // N×D_in
  Tensor edge_features;  // E×Z
};

/// Backward rule of graph_conv_preactivation given dL/d(pre-activation).
GraphConvGrads graph_conv_backward(const GraphConvLayer& layer, const BrainGraph& graph,
                                   const Tensor& edge_features, const Tensor& x, const Tensor& grad_pre);

/// 1×D_g embedding.
Tensor graph_embed(const EmbedLayer& layer, const Tensor& x);

struct GnnArch {
  std::size_t node_dim = 12;
  std::size_t edge_dim = 12;
  std::vector<std::size_t> conv_widths = {32, 32, 32};
  std::size_t embed_width = 64;
  std::size_t hidden_width = 16;
  Theta2Mode mode = Theta2Mode::Shared;

  void validate() const;
};

void to_json(nlohmann::json& j, const GnnArch& a);
void from_json(const nlohmann::json& j, GnnArch& a);

/// Three convolutions (ReLU after each), sum embedding, then
/// affine+ReLU+dropout, affine+dropout, sigmoid.
///
/// Parameter names: conv{l}.theta1, conv{l}.theta2 (shared) or
/// conv{l}.theta2.{z} (per channel), embed.theta, fc1.W, fc1.b, fc2.W, fc2.b.
class GnnModel {
 public:
  GnnModel() = default;
  /// Glorot-initialized weights, zero biases.
  GnnModel(const GnnArch& arch, std::uint64_t seed);
  GnnModel(const GnnArch& arch, ParamSet params);

  const GnnArch& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  GraphConvLayer conv_layer(std::size_t l) const;
  EmbedLayer embed_layer() const;

  /// Saved activations of one forward pass.
  struct Trace {
    const BrainGraph* graph = nullptr;
    Tensor edge_features;
    std::vector<Tensor> hidden;  // hidden[0] = input, hidden[l+1] = relu(conv_l)
    Tensor node_sum;             // 1×D (sum over nodes of hidden.back())
    Tensor embedding;            // 1×D_g
    Tensor fc1_out;              // relu output before dropout
    Tensor fc1_mask;
    Tensor fc1_dropped;
    Tensor fc2_mask;
    double logit = 0.0;          // after output dropout
    double probability = 0.5;
  };

  /// Forward pass with explicit edge features. A null dropout_rng means
  /// inference mode (dropout disabled).
  Trace forward(const BrainGraph& graph, const Tensor& edge_features, Rng* dropout_rng = nullptr,
                double dropout = 0.0) const;

  /// Accumulates dL/dθ for dL/dlogit into grads and returns dL/d(edge features).
  Tensor backward(const Trace& trace, double grad_logit, ParamSet& grads) const;

 private:
  GnnArch arch_;
  ParamSet params_;
};

/// Inference-mode probability of the mutant class.
double gnn_forward(const GnnModel& model, const BrainGraph& graph);

/// Data-dependent initialization: walking the layers in order, divides each
/// layer's weights by the root mean square of its pre-activation over the
/// given graphs, so every stage starts at unit scale. Neighbour sums are
/// unnormalized, which otherwise grows activations by roughly degree times
/// edge-feature sum per convolution. Biases are zero at this point.
void rescale_to_unit_activations(GnnModel& model, std::span<const BrainGraph> graphs);

inline constexpr double kProbabilityClamp = 1e-7;

struct ClassWeights {
  double mutant = 1.0;     // w1
  double wild_type = 1.0;  // w0
};

/// w_c = N_total / (2 N_c).
ClassWeights class_weights(std::size_t mutant_count, std::size_t wild_type_count);

/// -[w1 y ln p + w0 (1-y) ln(1-p)] with p clamped to [1e-7, 1-1e-7].
double weighted_bce(double p, int y, const ClassWeights& w);
/// d(weighted_bce(sigmoid(logit)))/d(logit), unclamped.
double weighted_bce_grad_logit(double p, int y, const ClassWeights& w);

struct TrainConfig {
  double learning_rate = 3e-4;
  double lr_decay_factor = 0.5;
  std::size_t lr_patience = 10;
  std::size_t stop_patience = 20;
  double weight_decay = 1e-4;
  double dropout = 0.0;  // applied after both head layers when positive
  double edge_drop = 0.1;
  std::size_t max_epochs = 300;
  std::size_t batch_size = 8;
  std::optional<ClassWeights> weights;  // derived from the training set when empty
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  GnnModel model;  // snapshot with the best validation loss
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  ClassWeights weights;
};

/// Mean weighted BCE over graphs in inference mode.
double mean_loss(const GnnModel& model, std::span<const BrainGraph> graphs, const ClassWeights& w);

TrainResult train_gnn(std::span<const BrainGraph> train, std::span<const BrainGraph> val, const GnnArch& arch,
                      const TrainConfig& config);

/// Confusion counts with mutant as the positive class. Rates are percentages;
/// a rate whose denominator is zero is NaN.
struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  double accuracy() const;
  double sensitivity() const;
  double specificity() const;
};

Metrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> labels);
/// Predicts mutant when the probability is >= 0.5.
Metrics evaluate(const GnnModel& model, std::span<const BrainGraph> graphs);

nlohmann::json metrics_json(const Metrics& m);
/// Table row formatted like "GNN + brain networks | acc | sens | spec".
std::string metrics_table(const Metrics& m, const std::string& method = "GNN + brain networks");

/// Hash over the architecture and training config stored in checkpoints.
std::string config_hash(const GnnArch& arch, const TrainConfig& config);

void save_gnn(const GnnModel& model, const TrainConfig& config, const nlohmann::json& extra,
              const std::filesystem::path& path);
struct LoadedGnn {
  GnnModel model;
  TrainConfig config;
  nlohmann::json header;
};
/// Throws CheckpointMismatchError if the stored hash does not match the stored config.
LoadedGnn load_gnn(const std::filesystem::path& path);

}  // namespace idhnet
