#include "cdsd/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cdsd::model {

namespace {

using diff::Expr;

std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

void add_mlp_layout(std::vector<std::pair<std::string, Shape>>& layout, const std::string& prefix,
                    const std::vector<std::size_t>& widths) {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layout.emplace_back(prefix + ".w" + std::to_string(l), Shape{widths[l], widths[l + 1]});
    layout.emplace_back(prefix + ".b" + std::to_string(l), Shape{1, widths[l + 1]});
  }
}

std::string transition_prefix(std::size_t j) { return "trans." + std::to_string(j); }

std::size_t mlp_depth(const ParamExprs& p, const std::string& prefix) {
  std::size_t l = 0;
  while (p.by_id.contains(prefix + ".w" + std::to_string(l))) ++l;
  return l;
}

// Layers [first, depth); `h` is the pre-activation of layer first - 1 when first > 0.
Expr mlp(const ParamExprs& p, const std::string& prefix, Expr h, std::size_t first = 0) {
  const std::size_t depth = mlp_depth(p, prefix);
  if (first > 0 && first < depth) h = diff::leaky_relu(h);
  for (std::size_t l = first; l < depth; ++l) {
    const Expr& w = p[prefix + ".w" + std::to_string(l)];
    const Expr& b = p[prefix + ".b" + std::to_string(l)];
    h = diff::matmul(h, w);
    h = diff::add(h, diff::broadcast(b, h.shape()));
    if (l + 1 < depth) h = diff::leaky_relu(h);
  }
  return h;
}

Tensor row_tensor(std::span<const double> v) { return Tensor({1, v.size()}, std::vector<double>(v.begin(), v.end())); }

std::vector<double> row_values(const Tensor& t) { return t.storage(); }

}  // namespace

const char* to_string(DecoderMode mode) { return mode == DecoderMode::linear ? "linear" : "nonlinear"; }

DecoderMode decoder_mode_from_string(const std::string& s) {
  if (s == "linear") return DecoderMode::linear;
  if (s == "nonlinear") return DecoderMode::nonlinear;
  throw std::invalid_argument("unknown decoder mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (d_z == 0) throw std::invalid_argument("model: d_z must be positive");
  if (d_z >= d_x) throw std::invalid_argument("model: d_z must be smaller than d_x");
  if (tau == 0) throw std::invalid_argument("model: tau must be at least 1");
  if (!(transition_variance > 0.0)) throw std::invalid_argument("model: transition_variance must be positive");
  if (decoder_mode == DecoderMode::nonlinear && embed_dim == 0) {
    throw std::invalid_argument("model: nonlinear decoder needs embed_dim > 0");
  }
}

std::string gamma_id(std::size_t lag) { return "gamma." + std::to_string(lag); }

graph::GraphLogits ModelParams::gamma(std::size_t tau) const {
  graph::GraphLogits out;
  for (std::size_t k = 1; k <= tau; ++k) out.push_back(tensors.at(gamma_id(k)));
  return out;
}

void ModelParams::set_gamma(const graph::GraphLogits& gamma) {
  for (std::size_t k = 0; k < gamma.size(); ++k) tensors[gamma_id(k + 1)] = gamma[k];
}

std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  layout.emplace_back("W", Shape{cfg.d_x, cfg.d_z});
  for (std::size_t k = 1; k <= cfg.tau; ++k) layout.emplace_back(gamma_id(k), Shape{cfg.d_z, cfg.d_z});
  for (std::size_t j = 0; j < cfg.d_z; ++j) {
    add_mlp_layout(layout, transition_prefix(j), layer_widths(cfg.tau * cfg.d_z, cfg.transition_hidden, 1));
  }
  add_mlp_layout(layout, "enc", layer_widths(cfg.d_x, cfg.encoder_hidden, cfg.d_z));
  if (cfg.decoder_mode == DecoderMode::nonlinear) {
    layout.emplace_back("dec.embed", Shape{cfg.d_x, cfg.embed_dim});
    add_mlp_layout(layout, "dec", layer_widths(1 + cfg.embed_dim, cfg.decoder_hidden, 1));
  }
  layout.emplace_back("logvar_x", Shape{1, cfg.d_x});
  layout.emplace_back("logvar_z", Shape{1, cfg.d_z});
  return layout;
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams params;
  for (const auto& [id, shape] : param_layout(cfg)) {
    Tensor t(shape);
    if (id == "W") {
      const double lo = 1.0 / (10.0 * static_cast<double>(cfg.d_z));
      const double hi = 1.0 / static_cast<double>(cfg.d_z);
      for (double& v : t.data()) v = uniform(rng, lo, hi);
    } else if (id.starts_with("gamma.")) {
      std::fill(t.data().begin(), t.data().end(), kInitGamma);
    } else if (id.starts_with("logvar_")) {
      std::fill(t.data().begin(), t.data().end(), kInitLogVariance);
    } else if (id == "dec.embed") {
      fill_normal(rng, t.data());
    } else {
      // Linear layer: fan-in is the row count of the matching weight.
      const auto dot = id.rfind('.');
      const std::string layer = id.substr(dot + 2);
      const std::string weight_id = id.substr(0, dot) + ".w" + layer;
      const Shape& ws = weight_id == id ? shape : params.tensors.at(weight_id).shape();
      const double bound = 1.0 / std::sqrt(static_cast<double>(ws[0]));
      for (double& v : t.data()) v = uniform(rng, -bound, bound);
    }
    params.tensors.emplace(id, std::move(t));
  }
  return params;
}

void check_params(const ModelConfig& cfg, const ModelParams& params) {
  for (const auto& [id, shape] : param_layout(cfg)) {
    auto it = params.tensors.find(id);
    if (it == params.tensors.end()) throw ShapeError("model parameter '" + id + "' missing");
    if (it->second.shape() != shape) {
      throw ShapeError("model parameter '" + id + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                       shape_string(shape));
    }
  }
}

ParamExprs param_exprs(const ModelConfig& cfg) {
  ParamExprs p;
  for (const auto& [id, shape] : param_layout(cfg)) p.by_id.emplace(id, diff::param(id, shape));
  for (std::size_t k = 1; k <= cfg.tau; ++k) p.gamma.push_back(p[gamma_id(k)]);
  return p;
}

Expr transition_mean(const ModelConfig& cfg, const ParamExprs& p, const Expr& z_past,
                     const std::vector<Expr>& graphs) {
  const std::size_t width = cfg.tau * cfg.d_z;
  if (z_past.shape().size() != 2 || z_past.shape()[1] != width) {
    throw ShapeError("transition_mean: expected B x " + std::to_string(width) + " input, got " +
                     shape_string(z_past.shape()));
  }
  if (graphs.size() != cfg.tau) throw ShapeError("transition_mean: expected one graph per lag");
  const std::size_t batch = z_past.shape()[0];
  std::vector<Expr> outputs;
  outputs.reserve(cfg.d_z);
  for (std::size_t j = 0; j < cfg.d_z; ++j) {
    std::vector<Expr> rows;
    for (const Expr& g : graphs) rows.push_back(diff::slice(g, 0, j, j + 1));
    Expr mask = diff::broadcast(diff::concat(rows, 1), {batch, width});
    outputs.push_back(mlp(p, transition_prefix(j), diff::mul(z_past, mask)));
  }
  return diff::concat(outputs, 1);
}

Expr decode(const ModelConfig& cfg, const ParamExprs& p, const Expr& z) {
  Expr mixed = diff::matmul(z, diff::transpose(p["W"]));
  if (cfg.decoder_mode == DecoderMode::linear) return mixed;
  const std::size_t batch = z.shape()[0];
  const std::size_t rows = batch * cfg.d_x;
  std::vector<std::size_t> index(rows);
  for (std::size_t r = 0; r < rows; ++r) index[r] = r % cfg.d_x;

  // The first layer acts on [s, e_j]; its embedding part depends only on j,
  // so it is computed once per variable and gathered.
  const Expr& w0 = p["dec.w0"];
  const std::size_t width = w0.shape()[1];
  Expr per_var = diff::add(diff::matmul(p["dec.embed"], diff::slice(w0, 0, 1, 1 + cfg.embed_dim)),
                           diff::broadcast(p["dec.b0"], {cfg.d_x, width}));
  Expr h = diff::add(diff::matmul(diff::reshape(mixed, {rows, 1}), diff::slice(w0, 0, 0, 1)),
                     diff::embed_lookup(per_var, std::move(index)));
  return diff::reshape(mlp(p, "dec", h, 1), {batch, cfg.d_x});
}

Expr encode_mean(const ModelConfig&, const ParamExprs& p, const Expr& x) { return mlp(p, "enc", x); }

Expr gaussian_kl(const Expr& q_mean, const Expr& q_logvar, const Expr& p_mean, const Expr& p_logvar) {
  Expr ratio = diff::mul(diff::add(diff::exp(q_logvar), diff::square(diff::sub(q_mean, p_mean))),
                         diff::exp(diff::neg(p_logvar)));
  Expr inner = diff::add_scalar(diff::add(diff::sub(p_logvar, q_logvar), ratio), -1.0);
  return diff::scale(diff::sum(inner), 0.5);
}

NoiseDraws sample_noise(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
  NoiseDraws n;
  n.now = Tensor({batch, cfg.d_z});
  fill_normal(rng, n.now.data());
  for (std::size_t k = 0; k < cfg.tau; ++k) {
    Tensor t({batch, cfg.d_z});
    fill_normal(rng, t.data());
    n.past.push_back(std::move(t));
  }
  return n;
}

NoiseDraws zero_noise(const ModelConfig& cfg, std::size_t batch) {
  NoiseDraws n;
  n.now = Tensor({batch, cfg.d_z}, 0.0);
  n.past.assign(cfg.tau, Tensor({batch, cfg.d_z}, 0.0));
  return n;
}

ElboTerms elbo_terms(const ModelConfig& cfg, const ParamExprs& p, const WindowBatch& batch,
                     const std::vector<Expr>& graphs, const NoiseDraws& noise) {
  const std::size_t b = batch.size();
  if (batch.x_past.size() != cfg.tau || noise.past.size() != cfg.tau) {
    throw ShapeError("elbo: expected " + std::to_string(cfg.tau) + " past steps");
  }
  if (batch.x_now.shape() != Shape{b, cfg.d_x}) throw ShapeError("elbo: x_now has wrong shape");

  std::vector<Expr> xs{diff::constant(batch.x_now)};
  for (const Tensor& xp : batch.x_past) xs.push_back(diff::constant(xp));
  Expr means = encode_mean(cfg, p, diff::concat(xs, 0));

  const Shape zshape{b, cfg.d_z};
  Expr q_logvar = diff::broadcast(p["logvar_z"], zshape);
  Expr q_std = diff::exp(diff::scale(q_logvar, 0.5));
  auto sample = [&](std::size_t step, const Tensor& eps) {
    Expr mu = diff::slice(means, 0, step * b, (step + 1) * b);
    return std::pair{mu, diff::add(mu, diff::mul(q_std, diff::constant(eps)))};
  };

  auto [mu_now, z_now] = sample(0, noise.now);
  std::vector<Expr> past;
  for (std::size_t k = 0; k < cfg.tau; ++k) past.push_back(sample(k + 1, noise.past[k]).second);
  Expr p_mean = transition_mean(cfg, p, diff::concat(past, 1), graphs);
  Expr p_logvar = diff::constant(Tensor(zshape, std::log(cfg.transition_variance)));

  ElboTerms t;
  t.kl = gaussian_kl(mu_now, q_logvar, p_mean, p_logvar);

  const Shape xshape{b, cfg.d_x};
  Expr x_logvar = diff::broadcast(p["logvar_x"], xshape);
  Expr resid = diff::sub(diff::constant(batch.x_now), decode(cfg, p, z_now));
  Expr quad = diff::add(diff::sum(x_logvar), diff::sum(diff::mul(diff::square(resid), diff::exp(diff::neg(x_logvar)))));
  const double log_norm = static_cast<double>(b * cfg.d_x) * std::log(2.0 * std::numbers::pi);
  t.reconstruction = diff::scale(diff::add_scalar(quad, log_norm), -0.5);
  t.elbo = diff::sub(t.reconstruction, t.kl);
  return t;
}

Gaussian transition_params(const ModelConfig& cfg, const ModelParams& params, const Tensor& z_window,
                           const graph::GraphSample& g) {
  if (z_window.shape() != Shape{cfg.tau, cfg.d_z}) throw ShapeError("transition_params: z_window shape");
  const ParamExprs p = param_exprs(cfg);
  Expr zp = diff::constant(Tensor({1, cfg.tau * cfg.d_z}, z_window.storage()));
  Tensor mean = diff::evaluate(transition_mean(cfg, p, zp, g.fixed()), params.tensors);
  return {row_values(mean), std::vector<double>(cfg.d_z, cfg.transition_variance)};
}

std::vector<double> decode(const ModelConfig& cfg, const ModelParams& params, std::span<const double> z) {
  if (z.size() != cfg.d_z) throw ShapeError("decode: z has wrong length");
  const ParamExprs p = param_exprs(cfg);
  return row_values(diff::evaluate(decode(cfg, p, diff::constant(row_tensor(z))), params.tensors));
}

Gaussian encode(const ModelConfig& cfg, const ModelParams& params, std::span<const double> x) {
  if (x.size() != cfg.d_x) throw ShapeError("encode: x has wrong length");
  const ParamExprs p = param_exprs(cfg);
  Gaussian out;
  out.mean = row_values(diff::evaluate(encode_mean(cfg, p, diff::constant(row_tensor(x))), params.tensors));
  for (double lv : params.at("logvar_z").data()) out.variance.push_back(std::exp(lv));
  return out;
}

Tensor encode_series(const ModelConfig& cfg, const ModelParams& params, const Tensor& x) {
  if (x.cols() != cfg.d_x) throw ShapeError("encode_series: series has wrong width");
  const ParamExprs p = param_exprs(cfg);
  return diff::evaluate(encode_mean(cfg, p, diff::constant(x)), params.tensors);
}

double gaussian_kl(std::span<const double> q_mean, std::span<const double> q_var, std::span<const double> p_mean,
                   std::span<const double> p_var) {
  const std::size_t n = q_mean.size();
  if (q_var.size() != n || p_mean.size() != n || p_var.size() != n) {
    throw ShapeError("gaussian_kl: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(q_var[i] > 0.0) || !(p_var[i] > 0.0)) throw std::invalid_argument("gaussian_kl: variances must be positive");
    const double d = q_mean[i] - p_mean[i];
    kl += 0.5 * (std::log(p_var[i] / q_var[i]) + (q_var[i] + d * d) / p_var[i] - 1.0);
  }
  return kl;
}

WindowBatch single_window_batch(const Window& w) {
  WindowBatch b;
  const std::size_t d_x = w.x_now.size();
  b.x_now = Tensor({1, d_x}, w.x_now.storage());
  for (std::size_t k = 0; k < w.x_past.rows(); ++k) {
    const auto row = w.x_past.data().subspan(k * d_x, d_x);
    b.x_past.emplace_back(Shape{1, d_x}, std::vector<double>(row.begin(), row.end()));
  }
  return b;
}

double elbo_window(const ModelConfig& cfg, const ModelParams& params, const Window& w, const graph::GraphSample& g,
                   const NoiseDraws& noise) {
  const ParamExprs p = param_exprs(cfg);
  ElboTerms t = elbo_terms(cfg, p, single_window_batch(w), g.fixed(), noise);
  return diff::evaluate(t.elbo, params.tensors).item();
}

}  // namespace cdsd::model
