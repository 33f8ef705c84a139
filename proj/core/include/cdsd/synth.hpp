#pragma once

// Ground-truth benchmark generator.
//
//   1. lagged graphs G^k with Bernoulli(p) entries and a forced G^1 diagonal
//   2. coefficients A^k on the support of G, |A| in [0.2, 1], rescaled so the
//      equivalent linear process is stationary; per-edge dynamics functions
//   3. a single-parent, non-negative, column-normalized mixing matrix W
//   4. x_j = r_j((W z)_j) + N(0, sigma^2)

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdsd/rng.hpp"

namespace cdsd::synth {

enum class Mode { linear, nonlinear };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct GenConfig {
  std::size_t d_x = 100;
  std::size_t d_z = 10;
  std::size_t tau = 1;
  std::size_t T = 5000;
  double edge_prob = 0.15;
  Mode dynamics = Mode::linear;
  Mode decoding = Mode::linear;
  std::optional<double> obs_noise_var;  // defaults to 0.1 (linear) / 0.5 (nonlinear decoding)
  std::size_t burn_in = 1000;
  std::uint64_t seed = 0;

  double noise_var() const;
  void validate() const;

  bool operator==(const GenConfig&) const = default;
};

inline constexpr double kLinearDecodingNoise = 0.1;
inline constexpr double kNonlinearDecodingNoise = 0.5;

/// Lag-indexed list of d_z x d_z matrices; element k - 1 holds lag k.
using LagMatrices = std::vector<Eigen::MatrixXd>;
using LagTags = std::vector<Eigen::MatrixXi>;

/// Indices into dynamics_function_bank().
enum DynamicsTag : int { kIdentity = 0, kBump = 1, kCubicBump = 2 };

using ScalarFn = double (*)(double);

/// {identity, x (1 + 4 exp(-x^2/2)), x (1 + 4 x^3 exp(-x^2/2))}.
const std::vector<ScalarFn>& dynamics_function_bank();

/// a x (2 sigmoid(10 x) - 1): a smooth, roughly |x|-shaped decoder.
double soft_abs_decoder(double amplitude, double x);

struct GroundTruth {
  LagMatrices G;
  LagMatrices A;        // stabilized coefficients
  LagTags tags;
  Eigen::MatrixXd W;    // d_x x d_z
  std::vector<int> decoder_nonlinear;     // per observed variable, 0 = identity
  std::vector<double> decoder_amplitude;  // a_j, 0 for identity decoders
  Eigen::MatrixXd z;    // T x d_z
  double spectral_radius = 0.0;  // of the stabilized companion matrix
};

struct Dataset {
  Eigen::MatrixXd x;  // T x d_x
};

LagMatrices sample_transition_graphs(std::size_t d_z, std::size_t tau, double p, Rng& rng);
LagMatrices sample_coefficients(const LagMatrices& G, Rng& rng);
LagTags sample_tags(const LagMatrices& G, Mode dynamics, Rng& rng);

enum class BlockOrder {
  lag_one_first,      // top block row [A^1 ... A^tau]; the companion of z_t = sum_k A^k z_{t-k}
  highest_lag_first,  // top block row [A^tau ... A^1]
};

Eigen::MatrixXd companion_matrix(const LagMatrices& A, BlockOrder order = BlockOrder::lag_one_first);
double companion_spectral_radius(const LagMatrices& A, BlockOrder order = BlockOrder::lag_one_first);

inline constexpr double kStabilizeEps = 1e-3;

/// A^k / rho^(k+1), followed by a post-check. If the rescaled system is not
/// stable: an already-stable input is returned unchanged, otherwise
/// A^k / (rho + eps)^k is returned (radius rho / (rho + eps) < 1).
LagMatrices stabilize(const LagMatrices& A);

/// Runs burn_in + T steps from zeros and returns the last T rows.
/// Throws std::runtime_error if the trajectory becomes non-finite.
Eigen::MatrixXd simulate_latents(const LagMatrices& A, const LagMatrices& G, const LagTags& tags, std::size_t T,
                                 std::size_t burn_in, Rng& rng);

Eigen::MatrixXd sample_W(std::size_t d_x, std::size_t d_z, Rng& rng);

struct Generated {
  Dataset data;
  GroundTruth truth;
};

Generated generate_dataset(const GenConfig& cfg);

/// Decoder means r_j((W z)_j) for a T x d_z latent series.
Eigen::MatrixXd decode_truth(const GroundTruth& truth, const Eigen::MatrixXd& z);

}  // namespace cdsd::synth
