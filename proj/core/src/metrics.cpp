#include "cdsd/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdsd::metrics {

namespace {

void check_perm(const Permutation& perm, std::size_t n) {
  if (perm.size() != n) throw std::invalid_argument("permutation size does not match");
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("not a permutation");
    seen[p] = true;
  }
}

}  // namespace

Correlation correlation_matrix(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != truth.rows()) throw std::invalid_argument("correlation_matrix: row counts differ");
  if (est.rows() < 3) throw std::invalid_argument("correlation_matrix: need at least 3 rows");
  auto standardize = [](const Eigen::MatrixXd& m, std::vector<bool>& constant) {
    Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    constant.assign(static_cast<std::size_t>(m.cols()), false);
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double norm = c.col(j).norm();
      if (norm == 0.0 || !std::isfinite(norm)) {
        constant[static_cast<std::size_t>(j)] = true;
        c.col(j).setZero();
      } else {
        c.col(j) /= norm;
      }
    }
    return c;
  };
  std::vector<bool> ce, ct;
  const Eigen::MatrixXd a = standardize(est, ce);
  const Eigen::MatrixXd b = standardize(truth, ct);
  Correlation out;
  out.abs_corr = (a.transpose() * b).cwiseAbs().cwiseMin(1.0);
  for (std::size_t j = 0; j < ce.size(); ++j) {
    if (ce[j]) out.constant_columns.push_back(j);
  }
  for (std::size_t j = 0; j < ct.size(); ++j) {
    if (ct[j]) out.constant_columns.push_back(ce.size() + j);
  }
  return out;
}

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("hungarian: cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials u (rows), v (columns); way/match use 1-based indices with 0 as sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double matched_mean(const Eigen::MatrixXd& abs_corr, const Permutation& perm) {
  check_perm(perm, static_cast<std::size_t>(abs_corr.rows()));
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    s += abs_corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
  }
  return perm.empty() ? 0.0 : s / static_cast<double>(perm.size());
}

MccResult mcc(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.cols() != truth.cols()) throw std::invalid_argument("mcc: column counts differ");
  Correlation c = correlation_matrix(est, truth);
  MccResult r;
  r.perm = hungarian(-c.abs_corr);
  r.score = matched_mean(c.abs_corr, r.perm);
  r.constant_columns = std::move(c.constant_columns);
  return r;
}

ShdResult shd(const std::vector<Eigen::MatrixXd>& est, const std::vector<Eigen::MatrixXd>& truth,
              const Permutation& perm) {
  if (est.size() != truth.size()) throw std::invalid_argument("shd: lag counts differ");
  ShdResult r;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const auto& e = est[k];
    const auto& t = truth[k];
    if (e.rows() != t.rows() || e.cols() != t.cols() || e.rows() != e.cols()) {
      throw std::invalid_argument("shd: graph shapes differ");
    }
    check_perm(perm, static_cast<std::size_t>(e.rows()));
    Eigen::MatrixXd relabeled = Eigen::MatrixXd::Zero(e.rows(), e.cols());
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.cols(); ++j) {
        relabeled(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]),
                  static_cast<Eigen::Index>(perm[static_cast<std::size_t>(j)])) = e(i, j);
      }
    }
    long count = 0;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) count += (relabeled(i, j) != 0.0) != (t(i, j) != 0.0);
    }
    r.per_lag.push_back(count);
    r.total += count;
  }
  return r;
}

double w_abs_error(const Eigen::MatrixXd& W_est, const Eigen::MatrixXd& W, const Permutation& perm) {
  if (W_est.rows() != W.rows() || W_est.cols() != W.cols()) throw std::invalid_argument("w_abs_error: shapes differ");
  check_perm(perm, static_cast<std::size_t>(W.cols()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < W_est.cols(); ++i) {
    const Eigen::VectorXd target = W.col(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    const double plus = (W_est.col(i) - target).cwiseAbs().sum();
    const double minus = (W_est.col(i) + target).cwiseAbs().sum();
    total += std::min(plus, minus);
  }
  return W.size() ? total / static_cast<double>(W.size()) : 0.0;
}

std::size_t single_parent_violation(const Eigen::MatrixXd& W, double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold <= 1.0)) {
    throw std::invalid_argument("single_parent_violation: threshold must be in (0,1]");
  }
  std::size_t rows = 0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const Eigen::VectorXd a = W.row(i).cwiseAbs().transpose();
    const double top = a.maxCoeff();
    if (!(top > 0.0)) continue;
    const auto above = (a.array() >= rel_threshold * top).count();
    if (above >= 2) ++rows;
  }
  return rows;
}

}  // namespace cdsd::metrics
