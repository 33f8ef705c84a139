#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cdsd::metrics {

/// perm[i] is the true index matched to estimated index i.
using Permutation = std::vector<std::size_t>;

/// |Pearson corr(est_i, truth_j)|. Constant columns give 0 and are listed in
/// `constant_columns` (estimated columns first, then true columns offset by d).
struct Correlation {
  Eigen::MatrixXd abs_corr;
  std::vector<std::size_t> constant_columns;
};

Correlation correlation_matrix(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// Returns assignment[row] = column.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

struct MccResult {
  double score = 0.0;
  Permutation perm;
  std::vector<std::size_t> constant_columns;
};

MccResult mcc(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);

/// Mean of the matched entries for an explicit permutation.
double matched_mean(const Eigen::MatrixXd& abs_corr, const Permutation& perm);

struct ShdResult {
  std::vector<long> per_lag;
  long total = 0;
};

/// Relabels est by perm on rows and columns (est node i becomes true node
/// perm[i]) and counts mismatches per lag.
ShdResult shd(const std::vector<Eigen::MatrixXd>& est, const std::vector<Eigen::MatrixXd>& truth,
              const Permutation& perm);

/// Mean |W_est P - W| after matching columns by perm and flipping each
/// matched column's sign to minimize its error.
double w_abs_error(const Eigen::MatrixXd& W_est, const Eigen::MatrixXd& W, const Permutation& perm);

/// Rows with at least two entries whose magnitude is >= rel_threshold * row max (row max > 0).
std::size_t single_parent_violation(const Eigen::MatrixXd& W, double rel_threshold);

inline constexpr double kSingleParentThreshold = 0.1;

struct EvalReport {
  std::optional<double> mcc;
  std::optional<Permutation> perm;
  std::optional<ShdResult> shd;
  std::optional<double> w_abs_error;
  double orthogonality_residual = 0.0;
  double min_w = 0.0;
  std::size_t single_parent_violations = 0;
  std::vector<std::string> notes;
};

}  // namespace cdsd::metrics
