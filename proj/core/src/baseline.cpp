#include "cdsd/baseline.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Eigenvalues>

namespace cdsd::baseline {

FactorSolution pca(const Eigen::MatrixXd& x, std::size_t d_z) {
  const auto k = static_cast<Eigen::Index>(d_z);
  if (d_z == 0 || k > x.cols()) throw std::invalid_argument("pca: need 0 < d_z <= d_x");
  if (x.rows() <= k) throw std::invalid_argument("pca: need T > d_z");

  FactorSolution s;
  s.mean = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - s.mean;
  const Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");

  const Eigen::Index d = cov.rows();
  s.loadings.resize(d, k);
  s.eigenvalues.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    // Eigen sorts ascending.
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - j);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    s.loadings.col(j) = v;
    s.eigenvalues(j) = solver.eigenvalues()(d - 1 - j);
    if (!(s.eigenvalues(j) > 0.0)) s.degenerate = true;
  }
  s.rotation = Eigen::MatrixXd::Identity(k, k);
  s.signs = Eigen::VectorXd::Ones(k);
  s.latents = xc * s.loadings;
  return s;
}

double varimax_criterion(const Eigen::MatrixXd& loadings) {
  const double k = static_cast<double>(loadings.cols());
  if (k == 0) return 0.0;
  const Eigen::ArrayXXd sq = loadings.array().square();
  const double quartic = sq.square().sum() / k;
  const double rows = (sq.rowwise().sum() / k).square().sum();
  return quartic - rows;
}

VarimaxResult varimax(const Eigen::MatrixXd& loadings, const VarimaxOptions& opts) {
  const Eigen::Index k = loadings.cols();
  const double p = static_cast<double>(loadings.rows());
  VarimaxResult r;
  r.rotation = Eigen::MatrixXd::Identity(k, k);
  r.criterion = varimax_criterion(loadings);
  if (k < 2) {
    r.converged = true;
    return r;
  }
  Eigen::MatrixXd L = loadings;
  for (r.iterations = 1; r.iterations <= opts.max_iter; ++r.iterations) {
    // One sweep of closed-form plane rotations over every column pair.
    for (Eigen::Index a = 0; a + 1 < k; ++a) {
      for (Eigen::Index b = a + 1; b < k; ++b) {
        const Eigen::ArrayXd x = L.col(a).array(), y = L.col(b).array();
        const Eigen::ArrayXd u = x.square() - y.square();
        const Eigen::ArrayXd v = 2.0 * x * y;
        const double A = u.sum(), B = v.sum();
        const double C = (u.square() - v.square()).sum();
        const double D = 2.0 * (u * v).sum();
        const double num = D - opts.gamma * 2.0 * A * B / p;
        const double den = C - opts.gamma * (A * A - B * B) / p;
        const double phi = 0.25 * std::atan2(num, den);
        if (phi == 0.0) continue;
        const double c = std::cos(phi), s = std::sin(phi);
        Eigen::Matrix2d plane;
        plane << c, -s, s, c;
        Eigen::MatrixXd cols(L.rows(), 2);
        cols << L.col(a), L.col(b);
        cols = cols * plane;
        L.col(a) = cols.col(0);
        L.col(b) = cols.col(1);
        Eigen::MatrixXd rcols(k, 2);
        rcols << r.rotation.col(a), r.rotation.col(b);
        rcols = rcols * plane;
        r.rotation.col(a) = rcols.col(0);
        r.rotation.col(b) = rcols.col(1);
      }
    }
    const double value = varimax_criterion(L);
    const double gain = value - r.criterion;
    r.criterion = value;
    if (gain < opts.tol) {
      r.converged = true;
      break;
    }
  }
  if (r.iterations > opts.max_iter) r.iterations = opts.max_iter;
  return r;
}

Eigen::VectorXd reflection_signs(const Eigen::MatrixXd& loadings) {
  Eigen::VectorXd s = Eigen::VectorXd::Ones(loadings.cols());
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < loadings.rows(); ++i) {
      if (std::abs(loadings(i, j)) > std::abs(loadings(best, j))) best = i;
    }
    if (loadings.rows() > 0 && loadings(best, j) < 0.0) s(j) = -1.0;
  }
  return s;
}

Eigen::MatrixXd reflect(const Eigen::MatrixXd& loadings) { return loadings * reflection_signs(loadings).asDiagonal(); }

const char* to_string(Variant v) {
  switch (v) {
    case Variant::pca:
      return "pca";
    case Variant::pca_varimax:
      return "pca_varimax";
    case Variant::pca_varimax_plus:
      return "pca_varimax_plus";
  }
  return "?";
}

FactorSolution fit(const Eigen::MatrixXd& x, std::size_t d_z, Variant variant, const VarimaxOptions& opts) {
  FactorSolution s = pca(x, d_z);
  if (variant == Variant::pca) return s;
  const Eigen::MatrixXd unrotated = s.loadings;
  s.rotation = varimax(unrotated, opts).rotation;
  s.loadings = unrotated * s.rotation;
  if (variant == Variant::pca_varimax_plus) {
    s.signs = reflection_signs(s.loadings);
    s.loadings = s.loadings * s.signs.asDiagonal();
  }
  s.latents = (x.rowwise() - s.mean) * s.loadings;
  return s;
}

LaggedDiscovery lagged_linear_discovery(const Eigen::MatrixXd& z, std::size_t tau, double alpha) {
  const auto d = static_cast<std::size_t>(z.cols());
  const auto T = static_cast<std::size_t>(z.rows());
  if (tau == 0) throw std::invalid_argument("lagged_linear_discovery: tau must be positive");
  if (T <= tau * d + 10) throw std::invalid_argument("lagged_linear_discovery: need T > tau * d_z + 10");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("lagged_linear_discovery: alpha must be in (0,1)");

  const auto n = static_cast<Eigen::Index>(T - tau);
  const auto p = static_cast<Eigen::Index>(1 + tau * d);
  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  for (std::size_t k = 1; k <= tau; ++k) {
    X.block(0, static_cast<Eigen::Index>(1 + (k - 1) * d), n, static_cast<Eigen::Index>(d)) =
        z.block(static_cast<Eigen::Index>(tau - k), 0, n, static_cast<Eigen::Index>(d));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) throw std::runtime_error("lagged_linear_discovery: rank-deficient lagged regressors");
  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  const Eigen::MatrixXd Y = z.bottomRows(n);
  const Eigen::MatrixXd beta = qr.solve(Y);
  const Eigen::MatrixXd resid = Y - X * beta;
  const double dof = static_cast<double>(n - p);
  const boost::math::students_t dist(dof);

  LaggedDiscovery out;
  out.graphs.assign(tau, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  out.p_values.assign(tau, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  for (std::size_t i = 0; i < d; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double s2 = resid.col(ii).squaredNorm() / dof;
    for (std::size_t k = 1; k <= tau; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        const auto c = static_cast<Eigen::Index>(1 + (k - 1) * d + j);
        const double se = std::sqrt(s2 * xtx_inv(c, c));
        double pv = 1.0;
        if (se > 0.0) {
          const double t = std::abs(beta(c, ii) / se);
          pv = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
        } else if (beta(c, ii) != 0.0) {
          pv = 0.0;
        }
        out.p_values[k - 1](ii, static_cast<Eigen::Index>(j)) = pv;
        if (pv < alpha) out.graphs[k - 1](ii, static_cast<Eigen::Index>(j)) = 1.0;
      }
    }
  }
  return out;
}

}  // namespace cdsd::baseline
