#pragma once

// Generative model and amortized posterior.
//
//   p(z_t | z_<t) = prod_j N(z_tj; g_j([G^1_j: * z_{t-1}, ..., G^tau_j: * z_{t-tau}]), v)
//   p(x_t | z_t)  = prod_j N(x_tj; r(W_j: z_t), sigma_j^2)
//   q(z_t | x_t)  = N(f(x_t), diag(sigma_tilde^2))
//
// Everything is expressed as diff::Expr builders over batches of windows so
// the optimizer can differentiate it; the numeric wrappers at the bottom
// evaluate single windows.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdsd/diff.hpp"
#include "cdsd/graph.hpp"
#include "cdsd/rng.hpp"
#include "cdsd/tensor.hpp"

namespace cdsd::model {

enum class DecoderMode { linear, nonlinear };

const char* to_string(DecoderMode mode);
DecoderMode decoder_mode_from_string(const std::string& s);

struct ModelConfig {
  std::size_t d_x = 0;
  std::size_t d_z = 0;
  std::size_t tau = 1;
  std::vector<std::size_t> transition_hidden;  // empty: g_j is affine
  DecoderMode decoder_mode = DecoderMode::linear;
  std::vector<std::size_t> decoder_hidden{32, 32};
  std::size_t embed_dim = 10;
  std::vector<std::size_t> encoder_hidden;  // empty: affine encoder
  double transition_variance = 1.0;

  /// Throws std::invalid_argument when d_z >= d_x, tau == 0 or the variance is not positive.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Learnable tensors keyed by parameter id. Vectors are stored as 1 x n.
struct ModelParams {
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& id) { return tensors.at(id); }
  const Tensor& at(const std::string& id) const { return tensors.at(id); }
  Tensor& W() { return tensors.at("W"); }
  const Tensor& W() const { return tensors.at("W"); }

  graph::GraphLogits gamma(std::size_t tau) const;
  void set_gamma(const graph::GraphLogits& gamma);

  bool operator==(const ModelParams&) const = default;
};

std::string gamma_id(std::size_t lag);

/// Parameter ids and shapes for a configuration, in a fixed order.
std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& cfg);

/// W ~ U[1/(10 d_z), 1/d_z], gamma = 5, log-variances = -4, network weights
/// and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), embeddings ~ N(0, 1).
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

/// Throws ShapeError if any tensor is missing or has the wrong shape.
void check_params(const ModelConfig& cfg, const ModelParams& params);

inline constexpr double kInitGamma = 5.0;
inline constexpr double kInitLogVariance = -4.0;

// ---- symbolic -------------------------------------------------------------

struct ParamExprs {
  std::map<std::string, diff::Expr> by_id;
  std::vector<diff::Expr> gamma;

  const diff::Expr& operator[](const std::string& id) const { return by_id.at(id); }
};

ParamExprs param_exprs(const ModelConfig& cfg);

/// z_past is B x (tau * d_z): [z_{t-1}, ..., z_{t-tau}]. Returns B x d_z means.
diff::Expr transition_mean(const ModelConfig& cfg, const ParamExprs& p, const diff::Expr& z_past,
                           const std::vector<diff::Expr>& graphs);

/// z is B x d_z. Returns B x d_x decoder means.
diff::Expr decode(const ModelConfig& cfg, const ParamExprs& p, const diff::Expr& z);

/// x is N x d_x. Returns N x d_z posterior means.
diff::Expr encode_mean(const ModelConfig& cfg, const ParamExprs& p, const diff::Expr& x);

/// Sum over all coordinates of KL(N(q_mean, exp(q_logvar)) || N(p_mean, exp(p_logvar))).
diff::Expr gaussian_kl(const diff::Expr& q_mean, const diff::Expr& q_logvar, const diff::Expr& p_mean,
                       const diff::Expr& p_logvar);

/// A batch of (tau + 1)-step windows.
struct WindowBatch {
  std::vector<Tensor> x_past;  // tau entries, lag 1 first, each B x d_x
  Tensor x_now;                // B x d_x
  std::size_t size() const { return x_now.rows(); }
};

/// Standard-normal draws for the reparameterized samples; all-zero draws give
/// the posterior means.
struct NoiseDraws {
  Tensor now;                // B x d_z
  std::vector<Tensor> past;  // tau entries, B x d_z
};

NoiseDraws sample_noise(const ModelConfig& cfg, std::size_t batch, Rng& rng);
NoiseDraws zero_noise(const ModelConfig& cfg, std::size_t batch);

struct ElboTerms {
  diff::Expr reconstruction;  // sum over the batch
  diff::Expr kl;              // sum over the batch
  diff::Expr elbo;            // reconstruction - kl
};

ElboTerms elbo_terms(const ModelConfig& cfg, const ParamExprs& p, const WindowBatch& batch,
                     const std::vector<diff::Expr>& graphs, const NoiseDraws& noise);

// ---- numeric wrappers -------------------------------------------------------

struct Gaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// One window: row k-1 of x_past holds x_{t-k}.
struct Window {
  Tensor x_past;  // tau x d_x
  Tensor x_now;   // 1 x d_x
};

/// z_window row k-1 holds z_{t-k}.
Gaussian transition_params(const ModelConfig& cfg, const ModelParams& params, const Tensor& z_window,
                           const graph::GraphSample& g);

std::vector<double> decode(const ModelConfig& cfg, const ModelParams& params, std::span<const double> z);

Gaussian encode(const ModelConfig& cfg, const ModelParams& params, std::span<const double> x);

/// Encoder means for every row of a T x d_x series.
Tensor encode_series(const ModelConfig& cfg, const ModelParams& params, const Tensor& x);

/// Throws std::invalid_argument on a non-positive variance.
double gaussian_kl(std::span<const double> q_mean, std::span<const double> q_var, std::span<const double> p_mean,
                   std::span<const double> p_var);

double elbo_window(const ModelConfig& cfg, const ModelParams& params, const Window& w, const graph::GraphSample& g,
                   const NoiseDraws& noise);

WindowBatch single_window_batch(const Window& w);

}  // namespace cdsd::model
