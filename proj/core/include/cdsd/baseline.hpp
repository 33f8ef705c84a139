#pragma once

// PCA, Varimax rotation, reflection, and a lagged OLS discovery step on the
// resulting latents.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cdsd::baseline {

struct FactorSolution {
  Eigen::MatrixXd loadings;  // d_x x d_z, orthonormal columns
  Eigen::MatrixXd latents;   // T x d_z, centered x times loadings
  Eigen::MatrixXd rotation;  // d_z x d_z
  Eigen::VectorXd signs;     // d_z, entries +-1
  Eigen::VectorXd eigenvalues;  // covariance eigenvalues of the kept directions
  Eigen::RowVectorXd mean;      // column means removed before projecting
  bool degenerate = false;      // fewer than d_z positive eigenvalues
};

/// Top-d_z covariance eigenvectors in descending eigenvalue order, each with
/// its first nonzero loading made positive.
FactorSolution pca(const Eigen::MatrixXd& x, std::size_t d_z);

/// (1/k) sum (L)^4 - sum_i ((1/k) sum_j L_ij^2)^2 for a d x k loading matrix L.
double varimax_criterion(const Eigen::MatrixXd& loadings);

struct VarimaxResult {
  Eigen::MatrixXd rotation;
  double criterion = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct VarimaxOptions {
  double tol = 1e-8;
  std::size_t max_iter = 1000;
  /// Orthomax weight: 0 ascends varimax_criterion exactly, 1 is Kaiser's
  /// column-variance form.
  double gamma = 0.0;
};

/// Sweeps of closed-form pairwise rotations (Kaiser). Stops when a sweep
/// gains less than tol.
VarimaxResult varimax(const Eigen::MatrixXd& loadings, const VarimaxOptions& opts = {});

/// s_j = sign of the column's largest-magnitude entry (first on ties, sign(0) = +1).
Eigen::VectorXd reflection_signs(const Eigen::MatrixXd& loadings);
Eigen::MatrixXd reflect(const Eigen::MatrixXd& loadings);

enum class Variant { pca, pca_varimax, pca_varimax_plus };

const char* to_string(Variant v);

/// Runs pca and, depending on the variant, varimax and reflection. Latents
/// are recomputed from the final loadings.
FactorSolution fit(const Eigen::MatrixXd& x, std::size_t d_z, Variant variant, const VarimaxOptions& opts = {});

struct LaggedDiscovery {
  std::vector<Eigen::MatrixXd> graphs;    // lag 1 first; (i, j) = 1 means j -> i
  std::vector<Eigen::MatrixXd> p_values;
};

/// Per-target OLS on all lagged latents (with intercept) and a two-sided
/// t-test per coefficient. Throws std::invalid_argument on T <= tau * d_z + 10
/// and std::runtime_error on rank-deficient regressors.
LaggedDiscovery lagged_linear_discovery(const Eigen::MatrixXd& z, std::size_t tau, double alpha = 0.05);

}  // namespace cdsd::baseline
