#include "idhnet/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idhnet/checkpoint.hpp"
#include "idhnet/errors.hpp"
#include "idhnet/layers.hpp"
#include "idhnet/rng.hpp"

namespace idhnet {

void AeConfig::validate() const {
  if (input_dim == 0 || latent_dim == 0) throw DataError("autoencoder dims must be positive");
  if (l2_coefficient < 0.0) throw DataError("l2_coefficient must be >= 0");
  if (!(sparsity_target > 0.0 && sparsity_target < 1.0)) throw DataError("sparsity_target must lie in (0, 1)");
  if (sparsity_weight < 0.0) throw DataError("sparsity_weight must be >= 0");
  if (batch_size == 0) throw DataError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
}

void to_json(nlohmann::json& j, const AeConfig& c) {
  j = {{"input_dim", c.input_dim},       {"latent_dim", c.latent_dim},
       {"l2_coefficient", c.l2_coefficient}, {"sparsity_target", c.sparsity_target},
       {"sparsity_weight", c.sparsity_weight}, {"epochs", c.epochs},
       {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AeConfig& c) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.l2_coefficient = j.value("l2_coefficient", c.l2_coefficient);
  c.sparsity_target = j.value("sparsity_target", c.sparsity_target);
  c.sparsity_weight = j.value("sparsity_weight", c.sparsity_weight);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
}

AeModel ae_init(std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed) {
  Rng rng(seed);
  AeModel model;
  model.params.add("W_e", glorot_uniform(input_dim, latent_dim, rng));
  model.params.add("b_e", Tensor({latent_dim}));
  model.params.add("W_d", glorot_uniform(latent_dim, input_dim, rng));
  model.params.add("b_d", Tensor({input_dim}));
  return model;
}

namespace {

struct Activations {
  Tensor hidden;  // B×latent
  Tensor output;  // B×input
};

Activations run(const AeModel& model, const Tensor& batch) {
  const ParamSet& p = model.params;
  Tensor hidden = sigmoid(affine_forward(batch, p.value("W_e"), p.value("b_e")));
  Tensor output = sigmoid(affine_forward(hidden, p.value("W_d"), p.value("b_d")));
  return {std::move(hidden), std::move(output)};
}

Tensor as_row(std::span<const double> x) { return Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())); }

Tensor as_row(std::span<const float> x) { return Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())); }

AeOutput forward_row(const AeModel& model, const Tensor& row) {
  if (row.cols() != model.input_dim()) {
    throw DimensionError("autoencoder input has " + std::to_string(row.cols()) + " values, model expects " +
                         std::to_string(model.input_dim()));
  }
  if (!row.all_finite()) throw DataError("autoencoder input contains a non-finite value");
  Activations a = run(model, row);
  return {std::vector<double>(a.hidden.data().begin(), a.hidden.data().end()),
          std::vector<double>(a.output.data().begin(), a.output.data().end())};
}

constexpr double kRhoClamp = 1e-7;

}  // namespace

AeOutput ae_forward(const AeModel& model, std::span<const double> x) { return forward_row(model, as_row(x)); }
AeOutput ae_forward(const AeModel& model, std::span<const float> x) { return forward_row(model, as_row(x)); }

std::vector<double> encode(const AeModel& model, std::span<const double> x) {
  return ae_forward(model, x).latent;
}
std::vector<double> encode(const AeModel& model, std::span<const float> x) {
  return ae_forward(model, x).latent;
}

double sparsity_kl(double rho, double rho_hat) {
  return rho * std::log(rho / rho_hat) + (1.0 - rho) * std::log((1.0 - rho) / (1.0 - rho_hat));
}

double ae_loss(const AeModel& model, const Tensor& batch, const AeConfig& config, ParamSet* grads) {
  if (batch.rank() != 2 || batch.rows() == 0) throw DataError("ae_loss: batch must be a non-empty matrix");
  if (batch.cols() != model.input_dim()) throw DimensionError("ae_loss: batch width differs from model input");
  const ParamSet& p = model.params;
  const auto n = static_cast<double>(batch.rows());
  Activations a = run(model, batch);

  // reconstruction
  Tensor diff = a.output;
  axpy(-1.0, batch, diff);
  const double recon = squared_norm(diff) / n;

  // weight penalty
  const double l2 = config.l2_coefficient * (squared_norm(p.value("W_e")) + squared_norm(p.value("W_d")));

  // sparsity
  const std::size_t latent = model.latent_dim();
  Tensor rho_hat = column_sums(a.hidden);
  double kl = 0.0;
  std::vector<double> dkl(latent, 0.0);
  const double rho = config.sparsity_target;
  for (std::size_t k = 0; k < latent; ++k) {
    const double raw = rho_hat[k] / n;
    const double r = std::clamp(raw, kRhoClamp, 1.0 - kRhoClamp);
    kl += sparsity_kl(rho, r);
    if (raw == r) dkl[k] = config.sparsity_weight * (-rho / r + (1.0 - rho) / (1.0 - r)) / n;
  }
  const double loss = recon + l2 + config.sparsity_weight * kl;

  if (grads != nullptr) {
    Tensor d_out = diff;
    for (double& v : d_out.data()) v *= 2.0 / n;
    Tensor d_pre_out = sigmoid_backward(a.output, d_out);
    AffineGrads dec = affine_backward(a.hidden, p.value("W_d"), d_pre_out);
    Tensor d_hidden = std::move(dec.input);
    for (std::size_t b = 0; b < d_hidden.rows(); ++b) {
      for (std::size_t k = 0; k < latent; ++k) d_hidden(b, k) += dkl[k];
    }
    Tensor d_pre_hidden = sigmoid_backward(a.hidden, d_hidden);
    AffineGrads enc = affine_backward(batch, p.value("W_e"), d_pre_hidden);
    axpy(2.0 * config.l2_coefficient, p.value("W_e"), enc.weight);
    axpy(2.0 * config.l2_coefficient, p.value("W_d"), dec.weight);
    grads->set_grad("W_e", std::move(enc.weight));
    grads->set_grad("b_e", std::move(enc.bias));
    grads->set_grad("W_d", std::move(dec.weight));
    grads->set_grad("b_d", std::move(dec.bias));
  }
  return loss;
}

double reconstruction_mse(const AeModel& model, const Tensor& data) {
  Activations a = run(model, data);
  Tensor diff = a.output;
  axpy(-1.0, data, diff);
  return squared_norm(diff) / static_cast<double>(diff.size());
}

Tensor stack_vectors(const std::vector<VoxelVector>& vectors) {
  if (vectors.empty()) throw DataError("stack_vectors: no vectors");
  const std::size_t width = vectors.front().size();
  std::vector<double> data;
  data.reserve(vectors.size() * width);
  for (const auto& v : vectors) {
    if (v.size() != width) throw DimensionError("stack_vectors: vectors differ in length");
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor({vectors.size(), width}, std::move(data));
}

AeTrainResult ae_train(const Tensor& data, const AeConfig& config) {
  config.validate();
  if (data.rank() != 2 || data.rows() < 2) throw DataError("ae_train: at least 2 training vectors required");
  if (data.cols() != config.input_dim) throw DimensionError("ae_train: data width differs from config.input_dim");
  if (!data.all_finite()) throw DataError("ae_train: training data contains a non-finite value");

  AeTrainResult result{ae_init(config.input_dim, config.latent_dim, derive_seed(config.seed, "ae.init")), {}, 0.0};
  Rng order_rng(derive_seed(config.seed, "ae.order"));
  AdamState adam;
  adam.config.learning_rate = config.learning_rate;

  result.initial_loss = ae_loss(result.model, data, config);
  const std::size_t n = data.rows();
  const std::size_t width = data.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::vector<double> rows;
      rows.reserve((stop - start) * width);
      for (std::size_t i = start; i < stop; ++i) {
        auto r = data.row(order[i]);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      const Tensor batch({stop - start, width}, std::move(rows));
      const double loss = ae_loss(result.model, batch, config, &result.model.params);
      if (!std::isfinite(loss)) throw DivergenceError("autoencoder loss diverged at epoch " + std::to_string(epoch));
      adam_step(result.model.params, adam);
    }
    result.epoch_loss.push_back(ae_loss(result.model, data, config));
  }
  return result;
}

AeTrainResult ae_train(const std::vector<VoxelVector>& vectors, const AeConfig& config) {
  if (vectors.size() < 2) throw DataError("ae_train: at least 2 training vectors required");
  return ae_train(stack_vectors(vectors), config);
}

void save_autoencoder(const AeModel& model, const AeConfig& config, const nlohmann::json& extra,
                      const std::filesystem::path& path) {
  Checkpoint ck;
  ck.header = extra;
  ck.header["kind"] = "autoencoder";
  ck.header["latent"] = model.latent_dim();
  ck.header["input"] = model.input_dim();
  ck.header["config"] = config;
  ck.tensors = model.params.values();
  save_checkpoint(path, ck);
}

LoadedAutoencoder load_autoencoder(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.value("kind", "") != "autoencoder") throw FormatError("not an autoencoder checkpoint: " + path.string());
  LoadedAutoencoder out;
  for (const char* name : {"W_e", "b_e", "W_d", "b_d"}) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw FormatError(std::string("autoencoder checkpoint lacks ") + name);
    out.model.params.add(name, it->second);
  }
  out.header = std::move(ck.header);
  return out;
}

}  // namespace idhnet
