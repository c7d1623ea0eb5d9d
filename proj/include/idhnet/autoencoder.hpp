#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "idhnet/optim.hpp"
#include "idhnet/volume.hpp"

namespace idhnet {

inline constexpr std::size_t kLatentDim = 12;

struct AeConfig {
  std::size_t input_dim = kVoxelVectorLength;
  std::size_t latent_dim = kLatentDim;
  double l2_coefficient = 0.001;
  double sparsity_target = 0.05;  // rho
  double sparsity_weight = 1.0;   // beta
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const AeConfig& c);
void from_json(const nlohmann::json& j, AeConfig& c);

/// Single-bottleneck autoencoder with sigmoid encoder and decoder.
/// Parameters: "W_e" (input×latent), "b_e", "W_d" (latent×input), "b_d".
struct AeModel {
  ParamSet params;

  std::size_t input_dim() const { return params.value("W_e").rows(); }
  std::size_t latent_dim() const { return params.value("W_e").cols(); }
};

/// Glorot-initialized weights, zero biases.
AeModel ae_init(std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed);

struct AeOutput {
  std::vector<double> latent;
  std::vector<double> reconstruction;
};

AeOutput ae_forward(const AeModel& model, std::span<const double> x);
AeOutput ae_forward(const AeModel& model, std::span<const float> x);

/// Encoder half only.
std::vector<double> encode(const AeModel& model, std::span<const double> x);
std::vector<double> encode(const AeModel& model, std::span<const float> x);

/// Sparse-MSE objective on a batch (rows are samples):
///   reconstruction error + l2 * sum(W_e^2 + W_d^2) + beta * sum_k KL(rho || rho_hat_k)
/// The reconstruction error is the squared error summed over input
/// dimensions and averaged over the batch. rho_hat_k is the batch-mean
/// activation of latent unit k, clamped to [1e-7, 1 - 1e-7].
/// When grads is non-null the analytic gradient is written into it.
double ae_loss(const AeModel& model, const Tensor& batch, const AeConfig& config, ParamSet* grads = nullptr);

/// KL(rho || rho_hat) for Bernoulli distributions.
double sparsity_kl(double rho, double rho_hat);

struct AeTrainResult {
  AeModel model;
  std::vector<double> epoch_loss;  // full-data loss after each epoch
  double initial_loss = 0.0;
};

/// Mini-batch Adam on ae_loss; deterministic for a given seed.
AeTrainResult ae_train(const Tensor& data, const AeConfig& config);
AeTrainResult ae_train(const std::vector<VoxelVector>& vectors, const AeConfig& config);

/// Mean squared reconstruction error per entry over a data matrix.
double reconstruction_mse(const AeModel& model, const Tensor& data);

/// Stacks voxel vectors into an n×10000 matrix.
Tensor stack_vectors(const std::vector<VoxelVector>& vectors);

void save_autoencoder(const AeModel& model, const AeConfig& config, const nlohmann::json& extra,
                      const std::filesystem::path& path);
struct LoadedAutoencoder {
  AeModel model;
  nlohmann::json header;
};
LoadedAutoencoder load_autoencoder(const std::filesystem::path& path);

}  // namespace idhnet
