#pragma once

// Constrained training: maximize the ELBO subject to W >= 0 and W^T W = I.
//
// Non-negativity is handled by projection after every step. Orthogonality is
// handled with an augmented Lagrangian: the minimized loss is
//
//   -mean ELBO + lambda_s * sum(sigmoid(gamma)) + tr(lambda^T h(W)) + mu/2 ||h(W)||_F^2
//
// where h(W) = W^T W - I. lambda and mu change only between subproblems.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdsd/diff.hpp"
#include "cdsd/model.hpp"
#include "cdsd/rng.hpp"
#include "cdsd/tensor.hpp"

namespace cdsd::optim {

struct TrainConfig {
  double lambda_s = 0.01;            // graph sparsity coefficient
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  double mu_init = 1e-3;
  double gamma_init = 0.0;           // initial value of every multiplier
  double eta = 2.0;
  double delta = 0.9;
  double constraint_threshold = 1e-4;
  std::size_t patience = 1000;       // steps without a new best held-out loss
  std::size_t eval_every = 50;
  std::size_t max_steps = 300000;
  std::uint64_t seed = 0;
  double split = 0.8;                // leading fraction of the series used for training
  double temperature = 1.0;          // Gumbel-Softmax temperature

  /// Throws std::invalid_argument on eta <= 1, delta outside (0,1), split outside (0,1), ...
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct AlmState {
  Tensor lambda;                 // d_z x d_z
  double mu = 1e-3;
  std::size_t stage = 0;         // number of solved subproblems
  std::optional<double> previous_h_norm;
  std::vector<double> stage_heldout_loss;

  static AlmState initial(std::size_t d_z, const TrainConfig& cfg);
};

struct Defect {
  Tensor h;      // W^T W - I
  double norm;   // Frobenius norm
};

Defect orthogonality_defect(const Tensor& W);
diff::Expr orthogonality_defect(const diff::Expr& W);

double alm_penalty(const Tensor& W, const AlmState& state);
diff::Expr alm_penalty(const diff::Expr& W, const AlmState& state);

/// lambda <- lambda + mu h(W*); mu <- eta mu if ||h(W*)|| > delta ||h(W*_prev)||.
/// Throws std::logic_error when the stage solution is missing.
AlmState alm_update(const AlmState& state, const Tensor& W_stage_solution, const TrainConfig& cfg);

void project_nonneg(Tensor& W);

struct RmsPropState {
  std::map<std::string, Tensor> square_avg;
  static constexpr double kDecay = 0.99;
  static constexpr double kEps = 1e-8;
};

/// v <- 0.99 v + 0.01 g^2;  p <- p - lr g / (sqrt(v) + 1e-8).
void rmsprop_step(std::map<std::string, Tensor>& params, const diff::Gradients& grads, RmsPropState& state,
                  double lr);

/// A T x d_x series; rows are time steps.
struct Series {
  Tensor x;
  std::size_t length() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
};

struct DiagnosticRecord {
  std::size_t step = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double h_norm = 0.0;
  double mu = 0.0;
  double mean_edge_prob = 0.0;
  std::size_t stage = 0;
};

std::string to_json_line(const DiagnosticRecord& r);

struct Diagnostics {
  std::vector<DiagnosticRecord> records;
  std::size_t steps = 0;
  bool converged = false;       // stopped because ||h|| <= threshold after a solved stage
  double final_h_norm = 0.0;
};

struct TrainResult {
  model::ModelParams params;
  AlmState alm;
  Diagnostics diagnostics;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Called after each diagnostic record with the current parameters; return
/// false to stop early.
using ProgressCallback = std::function<bool(const DiagnosticRecord&, const model::ModelParams&)>;

/// Minibatch of windows starting at the given time indices (window covers start .. start + tau).
model::WindowBatch gather_windows(const Tensor& x, std::size_t tau, const std::vector<std::size_t>& starts);

/// Full minimized objective on one batch for a given graph sample and noise.
diff::Expr training_loss(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const model::ParamExprs& p,
                         const model::WindowBatch& batch, const std::vector<diff::Expr>& graphs,
                         const model::NoiseDraws& noise, const AlmState& alm);

TrainResult train(const Series& data, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const ProgressCallback& progress = {});

/// Resumes from given parameters (used by tests and for warm starts).
TrainResult train(const Series& data, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  model::ModelParams init, const ProgressCallback& progress = {});

}  // namespace cdsd::optim
