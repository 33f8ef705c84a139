#include "cdsd/cli/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cdsd/baseline.hpp"
#include "cdsd/diff.hpp"
#include "cdsd/metrics.hpp"
#include "cdsd/model.hpp"
#include "cdsd/rng.hpp"
#include "cdsd/synth.hpp"

namespace cdsd::cli {

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kFdTolerance = 1e-5;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// One scalar touching every differentiable node kind (stop_gradient is
// excluded: it deliberately disagrees with finite differences).
diff::Expr all_ops_expression() {
  using namespace diff;
  Expr A = param("A", {3, 4});
  Expr B = param("B", {4, 2});
  Expr v = param("v", {1, 2});
  Expr table = param("table", {5, 3});
  Expr s = param("s", {});

  Expr h = leaky_relu(add(matmul(A, B), broadcast(v, {3, 2})));
  Expr t1 = sum(square(h));
  Expr t2 = mean(exp(scale(slice(A, 1, 0, 2), 0.3)));
  Expr t3 = sum(log(add_scalar(square(A), 1.0)));
  Expr t4 = sum(sigmoid(transpose(concat({A, slice(A, 0, 1, 3)}, 0))));
  Expr rows = embed_lookup(table, {0, 2, 2, 4});
  Expr t5 = sum(mul(rows, reshape(A, {4, 3})));
  Expr t6 = sum(mul(broadcast(s, {3, 4}), mul(A, A)));
  Expr t7 = sum(sub(concat({B, B}, 1), constant(Tensor({4, 4}, 0.5))));
  return t1 + t2 + t3 + t4 + t5 + t6 + t7;
}

double model_fd_error(bool nonlinear, const SelftestOptions& opts, Rng& rng, std::string& where) {
  model::ModelConfig cfg;
  cfg.d_x = 6;
  cfg.d_z = 2;
  cfg.tau = 2;
  cfg.transition_hidden = {4};
  if (nonlinear) {
    cfg.decoder_mode = model::DecoderMode::nonlinear;
    cfg.decoder_hidden = {5, 5};
    cfg.embed_dim = 3;
    cfg.encoder_hidden = {5};
  }
  model::ModelParams params = model::init_params(cfg, rng);
  for (auto& [id, t] : params.tensors) {
    if (id.rfind("logvar", 0) == 0) {
      for (double& v : t.data()) v = uniform(rng, -1.0, 0.5);
    }
  }
  const std::size_t b = 3;
  model::WindowBatch batch;
  batch.x_now = random_tensor({b, cfg.d_x}, rng);
  for (std::size_t k = 0; k < cfg.tau; ++k) batch.x_past.push_back(random_tensor({b, cfg.d_x}, rng));
  const model::NoiseDraws noise = model::sample_noise(cfg, b, rng);
  graph::BinaryGraphs graphs;
  for (std::size_t k = 0; k < cfg.tau; ++k) {
    Tensor g({cfg.d_z, cfg.d_z});
    for (double& v : g.data()) v = bernoulli(rng, 0.6) ? 1.0 : 0.0;
    graphs.push_back(std::move(g));
  }
  const model::ParamExprs p = model::param_exprs(cfg);
  const diff::Expr elbo = model::elbo_terms(cfg, p, batch, graph::fixed_sample(graphs).fixed(), noise).elbo;

  // Graph logits are unreachable with fixed graphs; everything else is checked.
  std::set<std::string> wrt;
  for (const auto& [id, t] : params.tensors) {
    if (id.rfind("gamma", 0) != 0) wrt.insert(id);
  }
  diff::Gradients grads = diff::gradient(elbo, params.tensors, wrt);
  if (opts.inject_gradient_bug) grads.at("W")[0] += 0.5;
  where = nonlinear ? "nonlinear model ELBO" : "linear model ELBO";
  return diff::finite_difference_check(elbo, params.tensors, grads, kFdStep);
}

// Spectral radius from ||H^(2^k)||^(1/2^k), independent of any eigen-solver.
double gelfand_radius(Eigen::MatrixXd H) {
  double log_norm = 0.0;
  for (int k = 0; k < 40; ++k) {
    H = H * H;
    log_norm *= 2.0;
    const double n = H.norm();
    if (n == 0.0) return 0.0;
    H /= n;
    log_norm += std::log(n);
  }
  return std::exp(log_norm / std::ldexp(1.0, 40));
}

double exhaustive_mcc(const Eigen::MatrixXd& abs_corr) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(abs_corr.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      s += abs_corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
    }
    best = std::max(best, s / static_cast<double>(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

CheckResult check_finite_differences(const SelftestOptions& opts) {
  CheckResult r{"finite-difference gradients", true, {}};
  Rng rng(opts.seed);

  const diff::Expr e = all_ops_expression();
  diff::Bindings b;
  std::set<std::string> wrt;
  for (const auto& [id, shape] : diff::collect_parameters(e)) {
    b.emplace(id, random_tensor(shape, rng));
    wrt.insert(id);
  }
  diff::Gradients g = diff::gradient(e, b, wrt);
  if (opts.inject_gradient_bug) g.at("A")[0] += 0.5;
  double worst = diff::finite_difference_check(e, b, g, kFdStep);
  std::string where = "all-ops expression";

  for (bool nonlinear : {false, true}) {
    std::string w;
    const double err = model_fd_error(nonlinear, opts, rng, w);
    if (err > worst) {
      worst = err;
      where = w;
    }
  }
  r.passed = worst < kFdTolerance;
  r.detail = "max rel. error " + fmt(worst) + " (" + where + "), tolerance " + fmt(kFdTolerance);
  return r;
}

CheckResult check_kl_monte_carlo(const SelftestOptions& opts) {
  CheckResult r{"gaussian KL vs Monte Carlo", true, {}};
  Rng rng(opts.seed + 1);
  const std::size_t d = 3;
  const std::size_t n = 1'000'000;
  Tensor qm({1, d}), qlv({1, d}), pm({1, d}), plv({1, d});
  for (std::size_t i = 0; i < d; ++i) {
    qm[i] = uniform(rng, -1.0, 1.0);
    pm[i] = uniform(rng, -1.0, 1.0);
    qlv[i] = uniform(rng, -1.0, 1.0);
    plv[i] = uniform(rng, -1.0, 1.0);
  }
  const double closed = diff::evaluate(model::gaussian_kl(diff::constant(qm), diff::constant(qlv), diff::constant(pm),
                                                          diff::constant(plv)),
                                       {})
                            .item();
  // E_q[log q(z) - log p(z)], estimated coordinate-wise from one draw per sample.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 1; s <= n; ++s) {
    double f = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double z = qm[i] + std::exp(0.5 * qlv[i]) * standard_normal(rng);
      const double lq = -0.5 * (qlv[i] + (z - qm[i]) * (z - qm[i]) * std::exp(-qlv[i]));
      const double lp = -0.5 * (plv[i] + (z - pm[i]) * (z - pm[i]) * std::exp(-plv[i]));
      f += lq - lp;
    }
    const double delta = f - mean;
    mean += delta / static_cast<double>(s);
    m2 += delta * (f - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  const double gap = std::abs(closed - mean);
  r.passed = gap < 3.0 * se;
  r.detail = "closed form " + fmt(closed) + ", MC " + fmt(mean) + ", |gap|/SE " + fmt(gap / se);
  return r;
}

CheckResult check_stabilization(const SelftestOptions& opts) {
  CheckResult r{"stabilized companion radius < 1", true, {}};
  Rng rng(opts.seed + 2);
  double worst = 0.0;
  std::size_t failures = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t tau = 1 + static_cast<std::size_t>(i % 3);
    const auto G = synth::sample_transition_graphs(5, tau, 0.3, rng);
    const auto A = synth::stabilize(synth::sample_coefficients(G, rng));
    const double rho = gelfand_radius(synth::companion_matrix(A));
    worst = std::max(worst, rho);
    if (!(rho < 1.0)) ++failures;
  }
  r.passed = failures == 0;
  r.detail = "100 systems, tau 1-3, largest radius " + fmt(worst);
  return r;
}

CheckResult check_mcc_assignment(const SelftestOptions& opts) {
  CheckResult r{"MCC assignment vs exhaustive search", true, {}};
  Rng rng(opts.seed + 3);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const auto d = static_cast<Eigen::Index>(2 + inst % 7);
    const Eigen::Index T = 60;
    Eigen::MatrixXd z(T, d), mix(d, d), noise(T, d);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = standard_normal(rng);
    for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] = standard_normal(rng);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = standard_normal(rng);
    const Eigen::MatrixXd est = z * mix + 0.5 * noise;
    const metrics::MccResult m = metrics::mcc(est, z);
    const double brute = exhaustive_mcc(metrics::correlation_matrix(est, z).abs_corr);
    worst = std::max(worst, std::abs(m.score - brute));
  }
  r.passed = worst < 1e-12;
  r.detail = "50 instances, d_z 2-8, max |assignment - exhaustive| " + fmt(worst);
  return r;
}

CheckResult check_varimax_recovery(const SelftestOptions& opts) {
  CheckResult r{"varimax recovers a rotated simple structure", true, {}};
  Rng rng(opts.seed + 4);
  Eigen::MatrixXd W0 = Eigen::MatrixXd::Zero(8, 2);
  for (Eigen::Index i = 0; i < 8; ++i) W0(i, i < 4 ? 0 : 1) = uniform(rng, 0.2, 1.0);
  for (Eigen::Index j = 0; j < 2; ++j) W0.col(j).normalize();
  const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  const Eigen::MatrixXd rotated = W0 * rot;

  const baseline::VarimaxResult v = baseline::varimax(rotated);
  const double target = baseline::varimax_criterion(W0);
  double grid_best = -1e300;
  for (double theta = 0.0; theta < M_PI; theta += 1e-4) {
    Eigen::Matrix2d R;
    R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    grid_best = std::max(grid_best, baseline::varimax_criterion(rotated * R));
  }
  const double gap = std::max(std::abs(v.criterion - target), std::abs(v.criterion - grid_best));
  r.passed = gap < 1e-6;
  r.detail = "criterion gap " + fmt(gap) + " (to the unrotated structure and to a 1e-4 rad grid search)";
  return r;
}

std::vector<CheckResult> run_selftest(const SelftestOptions& opts) {
  return {check_finite_differences(opts), check_kl_monte_carlo(opts), check_stabilization(opts),
          check_mcc_assignment(opts), check_varimax_recovery(opts)};
}

int cmd_selftest(const SelftestOptions& opts, std::ostream& out) {
  int failed = 0;
  for (const CheckResult& c : run_selftest(opts)) {
    out << (c.passed ? "PASS  " : "FAIL  ") << c.name << ": " << c.detail << "\n";
    failed += !c.passed;
  }
  out << (failed ? std::to_string(failed) + " check(s) failed\n" : "all checks passed\n");
  return failed ? 1 : 0;
}

}  // namespace cdsd::cli
