#include <cmath>

#include <gtest/gtest.h>

#include "cdsd/synth.hpp"
#include "oracles.hpp"

namespace cdsd::synth {
namespace {

TEST(Graphs, ForcedDiagonalAndExtremes) {
  Rng rng(1);
  const LagMatrices none = sample_transition_graphs(4, 3, 0.0, rng);
  EXPECT_EQ(none[0], Eigen::MatrixXd::Identity(4, 4));
  EXPECT_EQ(none[1], Eigen::MatrixXd::Zero(4, 4));
  EXPECT_EQ(none[2], Eigen::MatrixXd::Zero(4, 4));
  for (const auto& g : sample_transition_graphs(4, 2, 1.0, rng)) EXPECT_EQ(g, Eigen::MatrixXd::Ones(4, 4));
}

TEST(Graphs, OffDiagonalDensityIsBinomial) {
  Rng rng(2);
  const std::size_t draws = 1000;
  double edges = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const Eigen::MatrixXd g = sample_transition_graphs(10, 1, 0.15, rng)[0];
    edges += g.sum() - g.diagonal().sum();
  }
  const double n = 90.0 * draws;
  const double sd = std::sqrt(0.15 * 0.85 / n);
  EXPECT_NEAR(edges / n, 0.15, 3.0 * sd);
}

TEST(Coefficients, SupportMagnitudeAndSigns) {
  Rng rng(3);
  double positive = 0.0, total = 0.0;
  for (int i = 0; i < 200; ++i) {
    const LagMatrices G = sample_transition_graphs(8, 2, 0.4, rng);
    const LagMatrices A = sample_coefficients(G, rng);
    for (std::size_t k = 0; k < G.size(); ++k)
      for (Eigen::Index e = 0; e < G[k].size(); ++e) {
        const double a = A[k].data()[e];
        if (G[k].data()[e] == 0.0) {
          EXPECT_EQ(a, 0.0);
          continue;
        }
        EXPECT_GE(std::abs(a), 0.2);
        EXPECT_LE(std::abs(a), 1.0);
        positive += a > 0;
        total += 1;
      }
  }
  ASSERT_GT(total, 10000);
  EXPECT_NEAR(positive / total, 0.5, 3.0 * std::sqrt(0.25 / total));
}

TEST(Companion, ScalarAndDiagonalRadius) {
  EXPECT_NEAR(companion_spectral_radius({Eigen::MatrixXd::Constant(1, 1, 0.5)}), 0.5, 1e-15);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d.diagonal() << 0.3, 0.9;
  EXPECT_NEAR(companion_spectral_radius({d}), 0.9, 1e-15);
}

TEST(Companion, LayoutAndRadiusMatchGelfandOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LagMatrices A(2, Eigen::MatrixXd(3, 3));
    for (auto& a : A)
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform(rng, -0.6, 0.6);
    const Eigen::MatrixXd H = companion_matrix(A);
    EXPECT_EQ(H.block(0, 0, 3, 3), A[0]);
    EXPECT_EQ(H.block(0, 3, 3, 3), A[1]);
    EXPECT_EQ(H.block(3, 0, 3, 3), Eigen::MatrixXd::Identity(3, 3));
    EXPECT_EQ(H.block(3, 3, 3, 3), Eigen::MatrixXd::Zero(3, 3));
    EXPECT_NEAR(companion_spectral_radius(A), oracle::gelfand_radius(H), 1e-6);

    const Eigen::MatrixXd Hr = companion_matrix(A, BlockOrder::highest_lag_first);
    EXPECT_EQ(Hr.block(0, 0, 3, 3), A[1]);
    EXPECT_EQ(Hr.block(0, 3, 3, 3), A[0]);
  }
}

TEST(Companion, LagOneFirstLayoutGovernsTheRecursion) {
  // z_t = A1 z_{t-1} + A2 z_{t-2} stays bounded iff the lag-one-first companion is stable.
  LagMatrices A{Eigen::MatrixXd::Constant(1, 1, 0.0), Eigen::MatrixXd::Constant(1, 1, 0.9)};
  A[0](0, 0) = 0.5;
  // Characteristic polynomial x^2 - 0.5 x - 0.9 has root ~1.2282.
  EXPECT_NEAR(companion_spectral_radius(A), (0.5 + std::sqrt(0.25 + 3.6)) / 2.0, 1e-12);
}

TEST(Stabilize, RuleApplicationAndPostCheck) {
  const LagMatrices s = stabilize({Eigen::MatrixXd::Constant(1, 1, 2.0)});
  EXPECT_NEAR(s[0](0, 0), 0.5, 1e-15);

  // rho exactly 1: A / 1^(k+1) is unchanged and fails the post-check, so the
  // fallback divides by (rho + eps)^k.
  const LagMatrices unit = stabilize({Eigen::MatrixXd::Identity(2, 2)});
  EXPECT_NEAR(unit[0](0, 0), 1.0 / (1.0 + kStabilizeEps), 1e-15);
  EXPECT_LT(companion_spectral_radius(unit), 1.0);

  const LagMatrices zero{Eigen::MatrixXd::Zero(2, 2)};
  EXPECT_EQ(stabilize(zero)[0], zero[0]);
}

TEST(Stabilize, RandomSystemsBecomeStable) {
  Rng rng(5);
  for (int seed = 0; seed < 100; ++seed) {
    const LagMatrices G = sample_transition_graphs(5, 2, 0.4, rng);
    const LagMatrices A = stabilize(sample_coefficients(G, rng));
    EXPECT_LT(oracle::gelfand_radius(companion_matrix(A)), 1.0);
  }
}

TEST(FunctionBank, Values) {
  const auto& bank = dynamics_function_bank();
  ASSERT_EQ(bank.size(), 3u);
  EXPECT_EQ(bank[kIdentity](1.7), 1.7);
  EXPECT_EQ(bank[kBump](0.0), 0.0);
  EXPECT_NEAR(bank[kBump](10.0) / 10.0, 1.0, 1e-2);
  EXPECT_NEAR(bank[kBump](-10.0) / -10.0, 1.0, 1e-2);
  EXPECT_NEAR(bank[kCubicBump](1.0), 1.0 + 4.0 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(bank[kCubicBump](1.0), 3.4261, 1e-4);
}

TEST(Decoder, SoftAbsShape) {
  EXPECT_EQ(soft_abs_decoder(0.5, 0.0), 0.0);
  const double h = 1e-6;
  EXPECT_NEAR((soft_abs_decoder(0.5, h) - soft_abs_decoder(0.5, -h)) / (2 * h), 0.0, 1e-9);
  EXPECT_NEAR(soft_abs_decoder(0.5, 3.0), 1.5, 1e-10);
  EXPECT_NEAR(soft_abs_decoder(0.5, -3.0), 1.5, 1e-10);
}

TEST(Simulate, PureNoiseVariance) {
  Rng rng(6);
  const LagMatrices zero{Eigen::MatrixXd::Zero(3, 3)};
  const LagTags tags{Eigen::MatrixXi::Zero(3, 3)};
  const Eigen::MatrixXd z = simulate_latents(zero, zero, tags, 10000, 100, rng);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Eigen::VectorXd c = z.col(j).array() - z.col(j).mean();
    const double var = c.squaredNorm() / static_cast<double>(z.rows() - 1);
    EXPECT_GT(var, 0.9);
    EXPECT_LT(var, 1.1);
  }
}

TEST(Simulate, Ar1Autocorrelation) {
  Rng rng(7);
  const LagMatrices A{Eigen::MatrixXd::Constant(1, 1, 0.5)};
  const LagMatrices G{Eigen::MatrixXd::Ones(1, 1)};
  const LagTags tags{Eigen::MatrixXi::Zero(1, 1)};
  const Eigen::VectorXd z = simulate_latents(A, G, tags, 10000, 1000, rng).col(0);
  const Eigen::VectorXd c = z.array() - z.mean();
  const double r1 = c.head(c.size() - 1).dot(c.tail(c.size() - 1)) / c.squaredNorm();
  EXPECT_NEAR(r1, 0.5, 0.05);
}

TEST(Simulate, NonlinearDynamicsStayBounded) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const LagMatrices G = sample_transition_graphs(5, 1, 0.3, rng);
    const LagTags tags = sample_tags(G, Mode::nonlinear, rng);
    const LagMatrices A = stabilize(sample_coefficients(G, rng));
    for (Eigen::Index e = 0; e < tags[0].size(); ++e) {
      if (G[0].data()[e] != 0.0) {
        EXPECT_TRUE(tags[0].data()[e] == kBump || tags[0].data()[e] == kCubicBump);
      }
    }
    const Eigen::MatrixXd z = simulate_latents(A, G, tags, 10000, 1000, rng);
    EXPECT_LT(z.cwiseAbs().maxCoeff(), 1e3) << "seed " << seed;
  }
}

TEST(MixingMatrix, Invariants) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dz = 1 + trial % 7, dx = dz + static_cast<std::size_t>(trial) % 13;
    const Eigen::MatrixXd W = sample_W(dx, dz, rng);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      EXPECT_NEAR(W.col(j).norm(), 1.0, 1e-12);
      EXPECT_GE((W.col(j).array() > 0).count(), 1);
    }
    for (Eigen::Index i = 0; i < W.rows(); ++i) EXPECT_EQ((W.row(i).array() != 0).count(), 1);
    EXPECT_GE(W.minCoeff(), 0.0);
    EXPECT_LT((W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols())).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(sample_W(2, 3, rng), std::invalid_argument);
}

TEST(Generate, NoiseLevelsByMode) {
  GenConfig c;
  EXPECT_EQ(c.noise_var(), 0.1);
  c.decoding = Mode::nonlinear;
  EXPECT_EQ(c.noise_var(), 0.5);
  c.obs_noise_var = 0.2;
  EXPECT_EQ(c.noise_var(), 0.2);
}

TEST(Generate, NoiselessLinearDecodingIsExact) {
  GenConfig c;
  c.d_x = 12;
  c.d_z = 3;
  c.T = 200;
  c.obs_noise_var = 0.0;
  c.seed = 9;
  const Generated g = generate_dataset(c);
  EXPECT_EQ((g.data.x - g.truth.z * g.truth.W.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT(g.truth.spectral_radius, 1.0);
  EXPECT_EQ(g.truth.G[0].diagonal(), Eigen::VectorXd::Ones(3));
}

TEST(Generate, NonlinearDecoderAssignment) {
  GenConfig c;
  c.d_x = 200;
  c.d_z = 4;
  c.T = 100;
  c.decoding = Mode::nonlinear;
  c.obs_noise_var = 0.0;
  c.seed = 10;
  const Generated g = generate_dataset(c);
  std::size_t nonlinear = 0;
  for (std::size_t j = 0; j < c.d_x; ++j) {
    if (g.truth.decoder_nonlinear[j]) {
      ++nonlinear;
      EXPECT_GE(g.truth.decoder_amplitude[j], 0.2);
      EXPECT_LE(g.truth.decoder_amplitude[j], 0.7);
    } else {
      EXPECT_EQ(g.truth.decoder_amplitude[j], 0.0);
    }
  }
  EXPECT_NEAR(static_cast<double>(nonlinear) / 200.0, 0.5, 3.0 * std::sqrt(0.25 / 200.0));
  EXPECT_LT((g.data.x - decode_truth(g.truth, g.truth.z)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Generate, SameSeedSameData) {
  GenConfig c;
  c.d_x = 10;
  c.d_z = 3;
  c.T = 300;
  c.seed = 11;
  c.dynamics = Mode::nonlinear;
  const Generated a = generate_dataset(c), b = generate_dataset(c);
  EXPECT_EQ(a.data.x, b.data.x);
  EXPECT_EQ(a.truth.z, b.truth.z);
  c.seed = 12;
  EXPECT_NE(generate_dataset(c).data.x, a.data.x);
}

TEST(Generate, ConfigValidation) {
  GenConfig c;
  c.edge_prob = 1.5;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = {};
  c.d_x = 2;
  c.d_z = 3;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = {};
  c.T = 0;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

}  // namespace
}  // namespace cdsd::synth
