#pragma once

// Learnable distribution over lagged latent graphs: G^k_ij ~ Bernoulli(sigmoid(gamma^k_ij)).

#include <vector>

#include "cdsd/diff.hpp"
#include "cdsd/rng.hpp"
#include "cdsd/tensor.hpp"

namespace cdsd::graph {

/// One d_z x d_z logit matrix per lag, lag 1 first.
using GraphLogits = std::vector<Tensor>;
/// One binary d_z x d_z matrix per lag; entry (i, j) = 1 means z_j(t-k) -> z_i(t).
using BinaryGraphs = std::vector<Tensor>;

inline constexpr double kDefaultTemperature = 1.0;
inline constexpr double kDefaultThreshold = 0.5;

double sigmoid(double x);

std::vector<Tensor> edge_probs(const GraphLogits& gamma);

/// A hard Bernoulli draw together with the logistic noise that produced it.
/// The forward value seen by the model is `hard`; the backward path uses the
/// binary-concrete relaxation sigmoid((gamma + noise) / temperature).
struct GraphSample {
  BinaryGraphs hard;
  std::vector<Tensor> noise;
  double temperature = kDefaultTemperature;

  std::size_t lags() const { return hard.size(); }

  /// hard + (soft - stop_gradient(soft)) per lag, wired to the given logits.
  std::vector<diff::Expr> straight_through(const std::vector<diff::Expr>& gamma) const;
  /// The hard graphs as constants (no gradient path).
  std::vector<diff::Expr> fixed() const;
};

GraphSample sample_st(const GraphLogits& gamma, double temperature, Rng& rng);

/// A sample with given hard values and zero noise, for evaluation with a known graph.
GraphSample fixed_sample(const BinaryGraphs& graphs);

double sparsity_penalty(const GraphLogits& gamma);
diff::Expr sparsity_penalty(const std::vector<diff::Expr>& gamma);

/// Edge iff sigmoid(gamma) > threshold (strict).
BinaryGraphs binarize(const GraphLogits& gamma, double threshold = kDefaultThreshold);

}  // namespace cdsd::graph
