#include "cdsd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace cdsd::synth {

const char* to_string(Mode mode) { return mode == Mode::linear ? "linear" : "nonlinear"; }

Mode mode_from_string(const std::string& s) {
  if (s == "linear") return Mode::linear;
  if (s == "nonlinear") return Mode::nonlinear;
  throw std::invalid_argument("unknown mode '" + s + "' (expected linear or nonlinear)");
}

double GenConfig::noise_var() const {
  if (obs_noise_var) return *obs_noise_var;
  return decoding == Mode::linear ? kLinearDecodingNoise : kNonlinearDecodingNoise;
}

void GenConfig::validate() const {
  if (d_z == 0) throw std::invalid_argument("gen: d_z must be positive");
  if (d_x < d_z) throw std::invalid_argument("gen: d_x must be >= d_z");
  if (tau == 0) throw std::invalid_argument("gen: tau must be positive");
  if (T == 0) throw std::invalid_argument("gen: T must be positive");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw std::invalid_argument("gen: edge_prob must be in [0,1]");
  if (!(noise_var() >= 0.0) || !std::isfinite(noise_var())) {
    throw std::invalid_argument("gen: obs_noise_var must be finite and non-negative");
  }
}

namespace {

double bump(double x) { return x * (1.0 + 4.0 * std::exp(-0.5 * x * x)); }
double cubic_bump(double x) { return x * (1.0 + 4.0 * x * x * x * std::exp(-0.5 * x * x)); }
double identity_fn(double x) { return x; }

void check_lags(const LagMatrices& A) {
  if (A.empty()) throw std::invalid_argument("expected at least one lag");
  const auto n = A.front().rows();
  for (const auto& a : A) {
    if (a.rows() != n || a.cols() != n) throw std::invalid_argument("lag matrices must all be square and equal-sized");
  }
}

}  // namespace

const std::vector<ScalarFn>& dynamics_function_bank() {
  static const std::vector<ScalarFn> bank{identity_fn, bump, cubic_bump};
  return bank;
}

double soft_abs_decoder(double amplitude, double x) {
  return amplitude * x * (2.0 / (1.0 + std::exp(-10.0 * x)) - 1.0);
}

LagMatrices sample_transition_graphs(std::size_t d_z, std::size_t tau, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_transition_graphs: p must be in [0,1]");
  LagMatrices G(tau, Eigen::MatrixXd::Zero(d_z, d_z));
  for (auto& g : G) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = bernoulli(rng, p) ? 1.0 : 0.0;
    }
  }
  if (tau > 0) G[0].diagonal().setOnes();
  return G;
}

LagMatrices sample_coefficients(const LagMatrices& G, Rng& rng) {
  LagMatrices A;
  A.reserve(G.size());
  for (const auto& g : G) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        if (g(i, j) == 0.0) continue;
        const double magnitude = uniform(rng, 0.2, 1.0);
        a(i, j) = bernoulli(rng, 0.5) ? magnitude : -magnitude;
      }
    }
    A.push_back(std::move(a));
  }
  return A;
}

LagTags sample_tags(const LagMatrices& G, Mode dynamics, Rng& rng) {
  LagTags tags;
  tags.reserve(G.size());
  for (const auto& g : G) {
    Eigen::MatrixXi t = Eigen::MatrixXi::Constant(g.rows(), g.cols(), kIdentity);
    if (dynamics == Mode::nonlinear) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          if (g(i, j) != 0.0) t(i, j) = bernoulli(rng, 0.5) ? kBump : kCubicBump;
        }
      }
    }
    tags.push_back(std::move(t));
  }
  return tags;
}

Eigen::MatrixXd companion_matrix(const LagMatrices& A, BlockOrder order) {
  check_lags(A);
  const Eigen::Index n = A.front().rows();
  const auto tau = static_cast<Eigen::Index>(A.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n * tau, n * tau);
  for (Eigen::Index k = 0; k < tau; ++k) {
    const Eigen::Index block = order == BlockOrder::lag_one_first ? k : tau - 1 - k;
    H.block(0, block * n, n, n) = A[static_cast<std::size_t>(k)];
  }
  for (Eigen::Index k = 1; k < tau; ++k) H.block(k * n, (k - 1) * n, n, n).setIdentity();
  return H;
}

double companion_spectral_radius(const LagMatrices& A, BlockOrder order) {
  const Eigen::MatrixXd H = companion_matrix(A, order);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(H, false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("companion_spectral_radius: eigen-solver failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

LagMatrices stabilize(const LagMatrices& A) {
  const double rho = companion_spectral_radius(A);
  if (rho == 0.0) return A;
  LagMatrices out = A;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= std::pow(rho, static_cast<double>(k + 2));
  if (companion_spectral_radius(out) < 1.0) return out;
  if (rho < 1.0) return A;
  out = A;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= std::pow(rho + kStabilizeEps, static_cast<double>(k + 1));
  return out;
}

Eigen::MatrixXd simulate_latents(const LagMatrices& A, const LagMatrices& G, const LagTags& tags, std::size_t T,
                                 std::size_t burn_in, Rng& rng) {
  check_lags(A);
  if (G.size() != A.size() || tags.size() != A.size()) {
    throw std::invalid_argument("simulate_latents: A, G and tags must have the same number of lags");
  }
  const std::size_t tau = A.size();
  const auto d_z = static_cast<std::size_t>(A.front().rows());
  const auto& bank = dynamics_function_bank();

  // Ring of the last tau states; slot (t mod tau) holds z_t.
  std::vector<Eigen::VectorXd> ring(tau, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_z)));
  Eigen::MatrixXd z(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(d_z));
  Eigen::VectorXd next(static_cast<Eigen::Index>(d_z));
  const std::size_t total = burn_in + T;
  for (std::size_t t = tau; t < tau + total; ++t) {
    for (std::size_t i = 0; i < d_z; ++i) {
      double s = standard_normal(rng);
      for (std::size_t k = 1; k <= tau; ++k) {
        const Eigen::VectorXd& past = ring[(t - k) % tau];
        for (std::size_t j = 0; j < d_z; ++j) {
          const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
          if (G[k - 1](ii, jj) == 0.0) continue;
          s += A[k - 1](ii, jj) * bank.at(static_cast<std::size_t>(tags[k - 1](ii, jj)))(past(jj));
        }
      }
      next(static_cast<Eigen::Index>(i)) = s;
    }
    if (!next.allFinite()) {
      throw std::runtime_error("simulate_latents: trajectory became non-finite at step " + std::to_string(t - tau));
    }
    ring[t % tau] = next;
    const std::size_t recorded = t - tau;
    if (recorded >= burn_in) z.row(static_cast<Eigen::Index>(recorded - burn_in)) = next.transpose();
  }
  return z;
}

Eigen::MatrixXd sample_W(std::size_t d_x, std::size_t d_z, Rng& rng) {
  if (d_z == 0 || d_x < d_z) throw std::invalid_argument("sample_W: need 0 < d_z <= d_x");
  std::vector<std::size_t> parent(d_x);
  std::vector<std::size_t> first(d_z);
  std::iota(first.begin(), first.end(), 0);
  std::shuffle(first.begin(), first.end(), rng);
  std::uniform_int_distribution<std::size_t> any(0, d_z - 1);
  for (std::size_t i = 0; i < d_x; ++i) parent[i] = i < d_z ? first[i] : any(rng);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_x), static_cast<Eigen::Index>(d_z));
  for (std::size_t i = 0; i < d_x; ++i) {
    W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(parent[i])) = uniform(rng, 0.2, 1.0);
  }
  for (Eigen::Index j = 0; j < W.cols(); ++j) W.col(j) /= W.col(j).norm();
  return W;
}

Eigen::MatrixXd decode_truth(const GroundTruth& truth, const Eigen::MatrixXd& z) {
  Eigen::MatrixXd mean = z * truth.W.transpose();
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    if (!truth.decoder_nonlinear.at(static_cast<std::size_t>(j))) continue;
    const double a = truth.decoder_amplitude.at(static_cast<std::size_t>(j));
    for (Eigen::Index t = 0; t < mean.rows(); ++t) mean(t, j) = soft_abs_decoder(a, mean(t, j));
  }
  return mean;
}

Generated generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Generated out;
  GroundTruth& truth = out.truth;
  truth.G = sample_transition_graphs(cfg.d_z, cfg.tau, cfg.edge_prob, rng);
  truth.tags = sample_tags(truth.G, cfg.dynamics, rng);
  truth.A = stabilize(sample_coefficients(truth.G, rng));
  truth.spectral_radius = companion_spectral_radius(truth.A);
  if (!(truth.spectral_radius < 1.0)) {
    throw std::runtime_error("generate_dataset: stabilization failed (radius " +
                             std::to_string(truth.spectral_radius) + ")");
  }
  truth.z = simulate_latents(truth.A, truth.G, truth.tags, cfg.T, cfg.burn_in, rng);
  truth.W = sample_W(cfg.d_x, cfg.d_z, rng);

  truth.decoder_nonlinear.assign(cfg.d_x, 0);
  truth.decoder_amplitude.assign(cfg.d_x, 0.0);
  if (cfg.decoding == Mode::nonlinear) {
    for (std::size_t j = 0; j < cfg.d_x; ++j) {
      if (!bernoulli(rng, 0.5)) continue;
      truth.decoder_nonlinear[j] = 1;
      truth.decoder_amplitude[j] = uniform(rng, 0.2, 0.7);
    }
  }

  out.data.x = decode_truth(truth, truth.z);
  const double sd = std::sqrt(cfg.noise_var());
  for (Eigen::Index t = 0; t < out.data.x.rows(); ++t) {
    for (Eigen::Index j = 0; j < out.data.x.cols(); ++j) out.data.x(t, j) += sd * standard_normal(rng);
  }
  return out;
}

}  // namespace cdsd::synth
