#include "cdsd/optim.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "cdsd/graph.hpp"

namespace cdsd::optim {

namespace {

using diff::Expr;

Tensor identity(std::size_t n) {
  Tensor t({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double mean_edge_prob(const graph::GraphLogits& gamma) {
  double s = 0.0;
  std::size_t n = 0;
  for (const Tensor& p : graph::edge_probs(gamma)) {
    for (double v : p.data()) s += v;
    n += p.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda_s >= 0.0)) throw std::invalid_argument("train: lambda_s must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (!(mu_init > 0.0)) throw std::invalid_argument("train: mu_init must be positive");
  if (!(eta > 1.0)) throw std::invalid_argument("train: eta must be > 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("train: delta must be in (0,1)");
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("train: split must be in (0,1)");
  if (!(constraint_threshold >= 0.0)) throw std::invalid_argument("train: constraint_threshold must be >= 0");
  if (eval_every == 0) throw std::invalid_argument("train: eval_every must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("train: temperature must be positive");
}

AlmState AlmState::initial(std::size_t d_z, const TrainConfig& cfg) {
  AlmState s;
  s.lambda = Tensor({d_z, d_z}, cfg.gamma_init);
  s.mu = cfg.mu_init;
  return s;
}

Defect orthogonality_defect(const Tensor& W) {
  if (W.rank() != 2) throw ShapeError("orthogonality_defect: W must be a matrix");
  const std::size_t d_x = W.rows(), d_z = W.cols();
  Defect d{identity(d_z), 0.0};
  for (std::size_t a = 0; a < d_z; ++a) {
    for (std::size_t b = 0; b < d_z; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < d_x; ++i) s += W.at(i, a) * W.at(i, b);
      d.h.at(a, b) = s - d.h.at(a, b);
    }
  }
  double ss = 0.0;
  for (double v : d.h.data()) ss += v * v;
  d.norm = std::sqrt(ss);
  return d;
}

Expr orthogonality_defect(const Expr& W) {
  const std::size_t d_z = W.shape()[1];
  return diff::sub(diff::matmul(diff::transpose(W), W), diff::constant(identity(d_z)));
}

double alm_penalty(const Tensor& W, const AlmState& state) {
  const Defect d = orthogonality_defect(W);
  if (state.lambda.shape() != d.h.shape()) throw ShapeError("alm_penalty: multiplier shape mismatch");
  double trace = 0.0;
  for (std::size_t i = 0; i < d.h.size(); ++i) trace += state.lambda[i] * d.h[i];
  return trace + 0.5 * state.mu * d.norm * d.norm;
}

Expr alm_penalty(const Expr& W, const AlmState& state) {
  Expr h = orthogonality_defect(W);
  Expr trace = diff::sum(diff::mul(diff::constant(state.lambda), h));
  return diff::add(trace, diff::scale(diff::sum(diff::square(h)), 0.5 * state.mu));
}

AlmState alm_update(const AlmState& state, const Tensor& W_stage_solution, const TrainConfig& cfg) {
  if (W_stage_solution.size() == 0) throw std::logic_error("alm_update: no stage solution");
  const Defect d = orthogonality_defect(W_stage_solution);
  AlmState next = state;
  for (std::size_t i = 0; i < next.lambda.size(); ++i) next.lambda[i] += state.mu * d.h[i];
  if (state.previous_h_norm && d.norm > cfg.delta * *state.previous_h_norm) next.mu = cfg.eta * state.mu;
  next.previous_h_norm = d.norm;
  next.stage = state.stage + 1;
  return next;
}

void project_nonneg(Tensor& W) {
  for (double& v : W.data()) v = std::max(v, 0.0);
}

void rmsprop_step(std::map<std::string, Tensor>& params, const diff::Gradients& grads, RmsPropState& state,
                  double lr) {
  for (const auto& [id, g] : grads) {
    Tensor& p = params.at(id);
    if (p.shape() != g.shape()) throw ShapeError("rmsprop_step: gradient shape mismatch for '" + id + "'");
    auto [it, inserted] = state.square_avg.try_emplace(id, g.shape(), 0.0);
    Tensor& v = it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = RmsPropState::kDecay * v[i] + (1.0 - RmsPropState::kDecay) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i]) + RmsPropState::kEps);
    }
  }
}

std::string to_json_line(const DiagnosticRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\"step\":" << r.step << ",\"train_loss\":" << r.train_loss << ",\"heldout_loss\":" << r.heldout_loss
     << ",\"h_norm\":" << r.h_norm << ",\"mu\":" << r.mu << ",\"mean_edge_prob\":" << r.mean_edge_prob
     << ",\"stage\":" << r.stage << "}";
  return os.str();
}

model::WindowBatch gather_windows(const Tensor& x, std::size_t tau, const std::vector<std::size_t>& starts) {
  const std::size_t d_x = x.cols();
  const std::size_t b = starts.size();
  model::WindowBatch batch;
  batch.x_now = Tensor({b, d_x});
  batch.x_past.assign(tau, Tensor({b, d_x}));
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t now = starts[r] + tau;
    if (now >= x.rows()) throw ShapeError("gather_windows: window runs past the end of the series");
    std::copy_n(x.data().data() + now * d_x, d_x, batch.x_now.data().data() + r * d_x);
    for (std::size_t k = 1; k <= tau; ++k) {
      std::copy_n(x.data().data() + (now - k) * d_x, d_x, batch.x_past[k - 1].data().data() + r * d_x);
    }
  }
  return batch;
}

Expr training_loss(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const model::ParamExprs& p,
                   const model::WindowBatch& batch, const std::vector<Expr>& graphs, const model::NoiseDraws& noise,
                   const AlmState& alm) {
  model::ElboTerms terms = model::elbo_terms(mcfg, p, batch, graphs, noise);
  Expr loss = diff::scale(terms.elbo, -1.0 / static_cast<double>(batch.size()));
  loss = diff::add(loss, diff::scale(graph::sparsity_penalty(p.gamma), tcfg.lambda_s));
  return diff::add(loss, alm_penalty(p["W"], alm));
}

TrainResult train(const Series& data, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const ProgressCallback& progress) {
  mcfg.validate();
  Rng rng(tcfg.seed);
  model::ModelParams init = model::init_params(mcfg, rng);
  return train(data, mcfg, tcfg, std::move(init), progress);
}

TrainResult train(const Series& data, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  model::ModelParams init, const ProgressCallback& progress) {
  mcfg.validate();
  tcfg.validate();
  model::check_params(mcfg, init);
  if (data.dim() != mcfg.d_x) throw ShapeError("train: series width does not match d_x");
  const std::size_t T = data.length();
  const std::size_t tau = mcfg.tau;
  if (T <= tau) throw std::invalid_argument("train: series must be longer than tau");

  const auto train_end = static_cast<std::size_t>(std::floor(tcfg.split * static_cast<double>(T)));
  if (train_end <= tau || T - train_end <= tau) {
    throw std::invalid_argument("train: series too short for a train/held-out split with tau=" + std::to_string(tau));
  }
  const std::size_t n_train = train_end - tau;
  std::vector<std::size_t> heldout_starts;
  for (std::size_t s = train_end; s + tau < T; ++s) heldout_starts.push_back(s);
  const model::WindowBatch heldout = gather_windows(data.x, tau, heldout_starts);
  const model::NoiseDraws heldout_noise = model::zero_noise(mcfg, heldout.size());

  // Offset the stream so that initialization and sampling draws differ.
  Rng rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, n_train - 1);

  TrainResult result;
  result.params = std::move(init);
  result.alm = AlmState::initial(mcfg.d_z, tcfg);
  const model::ParamExprs p = model::param_exprs(mcfg);
  std::set<std::string> trainable;
  for (const auto& [id, t] : result.params.tensors) trainable.insert(id);
  RmsPropState opt;

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  std::vector<std::size_t> starts(tcfg.batch_size);

  std::size_t step = 0;
  while (step < tcfg.max_steps) {
    ++step;
    for (auto& s : starts) s = pick(rng);
    const model::WindowBatch batch = gather_windows(data.x, tau, starts);
    const graph::GraphSample g = graph::sample_st(result.params.gamma(tau), tcfg.temperature, rng);
    const model::NoiseDraws noise = model::sample_noise(mcfg, batch.size(), rng);
    Expr loss = training_loss(mcfg, tcfg, p, batch, g.straight_through(p.gamma), noise, result.alm);

    diff::ValueAndGradient vg;
    try {
      vg = diff::value_and_gradient(loss, result.params.tensors, trainable);
    } catch (const diff::EvalError& e) {
      throw DivergenceError(step, e.what());
    }
    if (!std::isfinite(vg.value)) throw DivergenceError(step, "loss");
    rmsprop_step(result.params.tensors, vg.grads, opt, tcfg.learning_rate);
    project_nonneg(result.params.W());

    if (step % tcfg.eval_every != 0) continue;

    const graph::GraphLogits gamma = result.params.gamma(tau);
    double heldout_loss = 0.0;
    try {
      std::vector<Expr> fixed;
      for (const Tensor& b : graph::binarize(gamma)) fixed.push_back(diff::constant(b));
      Expr hl = training_loss(mcfg, tcfg, p, heldout, fixed, heldout_noise, result.alm);
      heldout_loss = diff::evaluate(hl, result.params.tensors).item();
    } catch (const diff::EvalError& e) {
      throw DivergenceError(step, e.what());
    }

    DiagnosticRecord rec;
    rec.step = step;
    rec.train_loss = vg.value;
    rec.heldout_loss = heldout_loss;
    rec.h_norm = orthogonality_defect(result.params.W()).norm;
    rec.mu = result.alm.mu;
    rec.mean_edge_prob = mean_edge_prob(gamma);
    rec.stage = result.alm.stage;
    result.diagnostics.records.push_back(rec);
    if (progress && !progress(rec, result.params)) break;

    if (heldout_loss < best) {
      best = heldout_loss;
      best_step = step;
    }
    if (step - best_step >= tcfg.patience) {
      result.alm.stage_heldout_loss.push_back(best);
      if (rec.h_norm <= tcfg.constraint_threshold) {
        result.diagnostics.converged = true;
        break;
      }
      result.alm = alm_update(result.alm, result.params.W(), tcfg);
      best = std::numeric_limits<double>::infinity();
      best_step = step;
    }
  }

  result.diagnostics.steps = step;
  result.diagnostics.final_h_norm = orthogonality_defect(result.params.W()).norm;
  return result;
}

}  // namespace cdsd::optim
