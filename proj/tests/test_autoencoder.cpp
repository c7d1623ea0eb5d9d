#include <cmath>

#include <gtest/gtest.h>

#include "idhnet/autoencoder.hpp"
#include "idhnet/errors.hpp"
#include "idhnet/grad_check.hpp"
#include "idhnet/layers.hpp"
#include "test_support.hpp"

using namespace idhnet;
using idhnet::testing::random_tensor;
using idhnet::testing::TempDir;

namespace {

AeModel zero_model(std::size_t input, std::size_t latent) {
  AeModel m;
  m.params.add("W_e", Tensor({input, latent}));
  m.params.add("b_e", Tensor({latent}));
  m.params.add("W_d", Tensor({latent, input}));
  m.params.add("b_d", Tensor({input}));
  return m;
}

AeConfig small_config(std::size_t input, std::size_t latent) {
  AeConfig c;
  c.input_dim = input;
  c.latent_dim = latent;
  return c;
}

}  // namespace

TEST(AeForward, ZeroWeightsGiveHalves) {
  AeModel m = zero_model(kVoxelVectorLength, kLatentDim);
  std::vector<double> x(kVoxelVectorLength, 0.3);
  AeOutput out = ae_forward(m, x);
  ASSERT_EQ(out.latent.size(), 12u);
  ASSERT_EQ(out.reconstruction.size(), 10000u);
  for (double v : out.latent) EXPECT_EQ(v, 0.5);
  for (double v : out.reconstruction) ASSERT_EQ(v, 0.5);
}

TEST(AeForward, HandSizedFourTwoFour) {
  AeModel m = zero_model(4, 2);
  m.params.value("W_e") = Tensor::matrix({{1, 0}, {0, 1}, {1, -1}, {0.5, 0.5}});
  m.params.value("b_e") = Tensor::vector({0.1, -0.2});
  m.params.value("W_d") = Tensor::matrix({{1, 2, -1, 0}, {0, -1, 1, 3}});
  m.params.value("b_d") = Tensor::vector({0, 0.5, 0, -1});
  const std::vector<double> x = {0.2, 0.4, 0.6, 0.8};
  const double z0 = 1 / (1 + std::exp(-(0.2 + 0.6 + 0.4 + 0.1)));
  const double z1 = 1 / (1 + std::exp(-(0.4 - 0.6 + 0.4 - 0.2)));
  const double r[4] = {z0, 2 * z0 - z1 + 0.5, -z0 + z1, 3 * z1 - 1};
  AeOutput out = ae_forward(m, x);
  EXPECT_NEAR(out.latent[0], z0, 1e-15);
  EXPECT_NEAR(out.latent[1], z1, 1e-15);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(out.reconstruction[k], 1 / (1 + std::exp(-r[k])), 1e-15);
  EXPECT_EQ(encode(m, x), out.latent);
}

TEST(AeForward, NonFiniteInputIsAnError) {
  AeModel m = zero_model(3, 2);
  EXPECT_THROW(ae_forward(m, std::vector<double>{0.1, std::nan(""), 0.2}), DataError);
  EXPECT_THROW(ae_forward(m, std::vector<double>{0.1, 0.2}), DimensionError);
}

TEST(AeForward, LatentIsStrictlyInsideUnitInterval) {
  AeModel m = ae_init(kVoxelVectorLength, kLatentDim, 3);
  Rng rng(1);
  std::vector<float> x(kVoxelVectorLength);
  for (float& v : x) v = static_cast<float>(rng.uniform());
  auto z = encode(m, x);
  ASSERT_EQ(z.size(), kLatentDim);
  for (double v : z) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(AeLoss, PerfectReconstructionWithoutPenaltiesIsZero) {
  AeModel m = zero_model(6, 2);
  AeConfig c = small_config(6, 2);
  c.l2_coefficient = 0.0;
  c.sparsity_weight = 0.0;
  Tensor batch({3, 6}, 0.5);
  EXPECT_EQ(ae_loss(m, batch, c), 0.0);
}

TEST(AeLoss, DefaultL2Coefficient) { EXPECT_EQ(AeConfig{}.l2_coefficient, 0.001); }

TEST(AeLoss, SparsityKlHandValue) {
  const double expected = 0.05 * std::log(0.1) + 0.95 * std::log(1.9);
  EXPECT_NEAR(sparsity_kl(0.05, 0.5), expected, 1e-15);
  EXPECT_NEAR(expected, 0.4946, 1e-4);
  AeModel m = zero_model(4, 1);
  AeConfig c = small_config(4, 1);
  c.l2_coefficient = 0.0;
  c.sparsity_weight = 2.0;
  Tensor batch({2, 4}, 0.5);
  EXPECT_NEAR(ae_loss(m, batch, c), 2.0 * expected, 1e-14);
}

TEST(AeLoss, SaturatedActivationsKeepLossFinite) {
  AeConfig c = small_config(4, 2);
  Tensor batch({3, 4}, 0.5);
  for (double bias : {1000.0, -1000.0}) {
    AeModel m = zero_model(4, 2);
    m.params.value("b_e") = Tensor::vector({bias, bias});
    ParamSet grads = m.params;
    EXPECT_TRUE(std::isfinite(ae_loss(m, batch, c, &grads)));
    for (const auto& [name, t] : grads.grads()) {
      for (double v : t.data()) EXPECT_TRUE(std::isfinite(v)) << name;
    }
  }
}

TEST(AeLoss, ComponentsAgainstDirectEvaluation) {
  Rng rng(2);
  AeModel m = ae_init(7, 3, 5);
  AeConfig c = small_config(7, 3);
  Tensor batch = random_tensor({4, 7}, rng, 0.0, 1.0);
  double rec = 0.0;
  std::vector<double> mean_act(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    AeOutput o = ae_forward(m, batch.row(i));
    for (std::size_t d = 0; d < 7; ++d) rec += std::pow(o.reconstruction[d] - batch(i, d), 2);
    for (std::size_t k = 0; k < 3; ++k) mean_act[k] += o.latent[k] / 4.0;
  }
  rec /= 4.0;
  const double l2 = c.l2_coefficient * (squared_norm(m.params.value("W_e")) + squared_norm(m.params.value("W_d")));
  double kl = 0.0;
  for (double a : mean_act) kl += sparsity_kl(c.sparsity_target, a);
  EXPECT_NEAR(ae_loss(m, batch, c), rec + l2 + c.sparsity_weight * kl, 1e-12);
}

TEST(AeLoss, GradientsPassGradCheckOnDownscaledInstances) {
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    AeModel m = ae_init(16, 3, 100 + trial);
    for (auto name : {"b_e", "b_d"}) m.params.value(name) = random_tensor(m.params.value(name).shape(), rng, -0.5, 0.5);
    AeConfig c = small_config(16, 3);
    c.sparsity_weight = rng.uniform(0.0, 2.0);
    c.l2_coefficient = rng.uniform(0.0, 0.01);
    Tensor batch = random_tensor({5, 16}, rng, 0.0, 1.0);
    auto loss = [&](ParamSet& p) {
      AeModel local{p};
      ParamSet g = p;
      const double l = ae_loss(local, batch, c, &g);
      for (const auto& [name, t] : g.grads()) p.set_grad(name, t);
      return l;
    };
    GradCheckReport r = grad_check(loss, m.params);
    EXPECT_LT(r.worst, 1e-4) << r.worst_parameter;
    EXPECT_EQ(r.max_relative_error.size(), 4u);
  }
}

TEST(AeTrain, SameSeedIsBitIdentical) {
  Rng rng(4);
  Tensor data = random_tensor({12, 20}, rng, 0.0, 1.0);
  AeConfig c = small_config(20, 4);
  c.epochs = 5;
  AeTrainResult a = ae_train(data, c), b = ae_train(data, c);
  for (const auto& [name, t] : a.model.params.values()) EXPECT_EQ(t, b.model.params.value(name)) << name;
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(AeTrain, LossDoesNotIncrease) {
  Rng rng(5);
  Tensor data = random_tensor({24, 30}, rng, 0.0, 1.0);
  AeConfig c = small_config(30, 4);
  c.epochs = 30;
  c.learning_rate = 1e-2;
  AeTrainResult r = ae_train(data, c);
  EXPECT_LE(r.epoch_loss.back(), r.initial_loss);
  EXPECT_EQ(r.epoch_loss.size(), 30u);
}

TEST(AeTrain, NeedsTwoVectors) {
  AeConfig c = small_config(5, 2);
  EXPECT_THROW(ae_train(Tensor({1, 5}, 0.5), c), DataError);
  EXPECT_THROW(ae_train(std::vector<VoxelVector>{VoxelVector(10000, 0.5f)}, AeConfig{}), DataError);
}

TEST(AeTrain, NodeAndEdgeModelsAreIndependent) {
  Rng rng(6);
  Tensor data = random_tensor({6, 10}, rng, 0.0, 1.0);
  AeConfig c = small_config(10, 2);
  c.epochs = 2;
  AeTrainResult node = ae_train(data, c), edge = ae_train(data, c);
  EXPECT_NE(&node.model.params, &edge.model.params);
  edge.model.params.value("W_e")[0] += 1.0;
  EXPECT_NE(node.model.params.value("W_e")[0], edge.model.params.value("W_e")[0]);
}

TEST(AeConfig, RejectsInvalidValues) {
  AeConfig c;
  c.sparsity_target = 1.0;
  EXPECT_THROW(c.validate(), DataError);
  c = AeConfig{};
  c.l2_coefficient = -1;
  EXPECT_THROW(c.validate(), DataError);
  c = AeConfig{};
  c.sparsity_weight = -0.1;
  EXPECT_THROW(c.validate(), DataError);
}

TEST(AeCheckpoint, RoundTripWithDocumentedHeader) {
  TempDir dir("ae");
  AeModel m = ae_init(10, 3, 8);
  AeConfig c = small_config(10, 3);
  save_autoencoder(m, c, {{"roi_kind", "node"}}, dir / "ae.ckpt");
  LoadedAutoencoder back = load_autoencoder(dir / "ae.ckpt");
  for (const auto& [name, t] : m.params.values()) EXPECT_EQ(t, back.model.params.value(name));
  EXPECT_EQ(back.header.at("latent"), 3);
  EXPECT_EQ(back.header.at("input"), 10);
  EXPECT_TRUE(back.header.at("config").is_object());
  EXPECT_EQ(back.header.at("roi_kind"), "node");
}

TEST(AeCheckpoint, RejectsForeignFile) {
  TempDir dir("ae");
  std::ofstream(dir / "junk") << "not a checkpoint";
  EXPECT_THROW(load_autoencoder(dir / "junk"), FormatError);
}
