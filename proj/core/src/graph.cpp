#include "cdsd/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdsd::graph {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<Tensor> edge_probs(const GraphLogits& gamma) {
  std::vector<Tensor> out;
  out.reserve(gamma.size());
  for (const Tensor& g : gamma) {
    Tensor p(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) p[i] = sigmoid(g[i]);
    out.push_back(std::move(p));
  }
  return out;
}

GraphSample sample_st(const GraphLogits& gamma, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_st: temperature must be positive");
  GraphSample s;
  s.temperature = temperature;
  // Difference of two Gumbel(0,1) draws is Logistic(0,1): log u - log(1-u).
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const Tensor& g : gamma) {
    Tensor noise(g.shape());
    Tensor hard(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double u = unit(rng);
      while (u <= 0.0) u = unit(rng);
      noise[i] = std::log(u) - std::log1p(-u);
      hard[i] = (g[i] + noise[i] > 0.0) ? 1.0 : 0.0;
    }
    s.hard.push_back(std::move(hard));
    s.noise.push_back(std::move(noise));
  }
  return s;
}

GraphSample fixed_sample(const BinaryGraphs& graphs) {
  GraphSample s;
  s.hard = graphs;
  for (const Tensor& g : graphs) s.noise.emplace_back(g.shape(), 0.0);
  return s;
}

std::vector<diff::Expr> GraphSample::straight_through(const std::vector<diff::Expr>& gamma) const {
  if (gamma.size() != hard.size()) throw ShapeError("straight_through: lag count mismatch");
  std::vector<diff::Expr> out;
  out.reserve(hard.size());
  for (std::size_t k = 0; k < hard.size(); ++k) {
    diff::Expr soft = diff::sigmoid(diff::scale(diff::add(gamma[k], diff::constant(noise[k])), 1.0 / temperature));
    out.push_back(diff::add(diff::constant(hard[k]), diff::sub(soft, diff::stop_gradient(soft))));
  }
  return out;
}

std::vector<diff::Expr> GraphSample::fixed() const {
  std::vector<diff::Expr> out;
  for (const Tensor& h : hard) out.push_back(diff::constant(h));
  return out;
}

double sparsity_penalty(const GraphLogits& gamma) {
  double s = 0.0;
  for (const Tensor& p : edge_probs(gamma))
    for (double v : p.data()) s += v;
  return s;
}

diff::Expr sparsity_penalty(const std::vector<diff::Expr>& gamma) {
  diff::Expr total;
  for (const diff::Expr& g : gamma) {
    diff::Expr s = diff::sum(diff::sigmoid(g));
    total = total ? diff::add(total, s) : s;
  }
  return total ? total : diff::constant(0.0);
}

BinaryGraphs binarize(const GraphLogits& gamma, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binarize: threshold must be in (0,1)");
  BinaryGraphs out;
  for (const Tensor& p : edge_probs(gamma)) {
    Tensor b(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) b[i] = p[i] > threshold ? 1.0 : 0.0;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace cdsd::graph
