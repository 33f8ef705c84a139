#include "cdsd/cli/report.hpp"

#include "json.hpp"

namespace cdsd::cli {

using nlohmann::json;

namespace {

void fill_common(Report& r, const Eigen::MatrixXd& W, const Eigen::MatrixXd& latents,
                 const std::vector<Eigen::MatrixXd>& graphs, const std::optional<synth::GroundTruth>& truth,
                 const EvalOptions& opts) {
  metrics::EvalReport& e = r.eval;
  const Eigen::MatrixXd h = W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols());
  e.orthogonality_residual = h.norm();
  e.min_w = W.size() ? W.minCoeff() : 0.0;
  e.single_parent_violations = metrics::single_parent_violation(W, opts.single_parent_threshold);
  r.single_parent_threshold = opts.single_parent_threshold;
  for (const auto& g : graphs) r.edges_per_lag.push_back(static_cast<long>((g.array() != 0.0).count()));

  if (!truth) {
    e.notes.emplace_back("no ground truth: mcc, shd and w_abs_error omitted");
    return;
  }
  if (truth->z.cols() != latents.cols() || truth->z.rows() != latents.rows()) {
    e.notes.emplace_back("latent dimension differs from ground truth: mcc, shd and w_abs_error omitted");
    return;
  }
  const metrics::MccResult m = metrics::mcc(latents, truth->z);
  e.mcc = m.score;
  e.perm = m.perm;
  for (std::size_t c : m.constant_columns) {
    e.notes.push_back("constant latent column " + std::to_string(c) + " scored as zero correlation");
  }
  if (truth->W.rows() == W.rows()) e.w_abs_error = metrics::w_abs_error(W, truth->W, m.perm);
  if (graphs.size() == truth->G.size()) {
    e.shd = metrics::shd(graphs, truth->G, m.perm);
  } else {
    e.notes.emplace_back("lag count differs from ground truth: shd omitted");
  }
}

}  // namespace

Report evaluate_model(const model::ModelConfig& cfg, const model::ModelParams& params, const Eigen::MatrixXd& x,
                      const std::optional<synth::GroundTruth>& truth, const EvalOptions& opts) {
  if (static_cast<std::size_t>(x.cols()) != cfg.d_x) {
    throw std::invalid_argument("model expects d_x=" + std::to_string(cfg.d_x) + " but data has " +
                                std::to_string(x.cols()) + " columns");
  }
  Report r;
  r.method = "cdsd";
  r.d_x = cfg.d_x;
  r.d_z = cfg.d_z;
  r.tau = cfg.tau;
  const Eigen::MatrixXd latents = model::encode_series(cfg, params, Tensor::from_eigen(x)).to_eigen();
  std::vector<Eigen::MatrixXd> graphs;
  for (const Tensor& g : graph::binarize(params.gamma(cfg.tau), opts.edge_threshold)) graphs.push_back(g.to_eigen());
  fill_common(r, params.W().to_eigen(), latents, graphs, truth, opts);
  return r;
}

Report evaluate_factors(baseline::Variant variant, const baseline::FactorSolution& f,
                        const baseline::LaggedDiscovery& graphs, const std::optional<synth::GroundTruth>& truth,
                        const EvalOptions& opts) {
  Report r;
  r.method = baseline::to_string(variant);
  r.d_x = static_cast<std::size_t>(f.loadings.rows());
  r.d_z = static_cast<std::size_t>(f.loadings.cols());
  r.tau = graphs.graphs.size();
  if (f.degenerate) r.eval.notes.emplace_back("fewer than d_z positive covariance eigenvalues");
  fill_common(r, f.loadings, f.latents, graphs.graphs, truth, opts);
  return r;
}

std::string report_json(const Report& r) {
  const metrics::EvalReport& e = r.eval;
  json j;
  j["format"] = "cdsd-report";
  j["version"] = 1;
  j["method"] = r.method;
  j["d_x"] = r.d_x;
  j["d_z"] = r.d_z;
  j["tau"] = r.tau;
  j["mcc"] = e.mcc ? json(*e.mcc) : json(nullptr);
  j["permutation"] = e.perm ? json(*e.perm) : json(nullptr);
  if (e.shd) {
    j["shd"] = {{"per_lag", e.shd->per_lag}, {"total", e.shd->total}};
  } else {
    j["shd"] = nullptr;
  }
  j["w_abs_error"] = e.w_abs_error ? json(*e.w_abs_error) : json(nullptr);
  j["orthogonality_residual"] = e.orthogonality_residual;
  j["min_w"] = e.min_w;
  j["single_parent_violations"] = e.single_parent_violations;
  j["single_parent_threshold"] = r.single_parent_threshold;
  j["edges_per_lag"] = r.edges_per_lag;
  if (r.training) {
    j["training"] = {{"steps", r.training->steps},
                     {"converged", r.training->converged},
                     {"stages", r.training->stages},
                     {"final_mu", r.training->final_mu}};
  }
  j["notes"] = e.notes;
  return j.dump(2) + "\n";
}

}  // namespace cdsd::cli
