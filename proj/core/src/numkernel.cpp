#include "invreg/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace invreg::num {

namespace {

LinearFit solve_qr(const Vector& response, const Matrix& design, bool intercept,
                   Eigen::Index n_predictors) {
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const Matrix& r = qr.matrixR();
  const Eigen::Index p = design.cols();

  double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < p; ++k) {
    const double d = std::abs(r(k, k));
    rmax = std::max(rmax, d);
    rmin = std::min(rmin, d);
  }
  if (!(rmin > kRankTolFactor * rmax)) {
    // report the pivoted-away original columns (intercept column marked as -1)
    const auto perm = qr.colsPermutation().indices();
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < p; ++k)
      if (std::abs(r(k, k)) > kRankTolFactor * rmax) ++rank;
    std::ostringstream msg;
    msg << "rank-deficient design (rank " << rank << " of " << p << "); dependent columns:";
    for (Eigen::Index k = rank; k < p; ++k) {
      const Eigen::Index orig = perm[k];
      msg << ' ' << (intercept ? orig - 1 : orig);
    }
    throw Error(ErrorCode::RankDeficient, msg.str());
  }

  Vector all = qr.solve(response);
  LinearFit fit;
  fit.intercept = intercept ? all[0] : 0.0;
  fit.coef = intercept ? Vector(all.tail(n_predictors)) : Vector(all);
  fit.residuals = response - design * all;
  return fit;
}

Matrix with_intercept(const Matrix& predictors, Eigen::Index n) {
  Matrix d(n, predictors.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(predictors.cols()) = predictors;
  return d;
}

}  // namespace

LinearFit ols(const Vector& response, const Matrix& predictors, bool intercept) {
  const Eigen::Index n = response.size();
  if (predictors.rows() != n)
    throw Error(ErrorCode::InvalidSpec, "ols: predictor rows must match response length");
  const Eigen::Index p = predictors.cols() + (intercept ? 1 : 0);
  if (p > n)
    throw Error(ErrorCode::TooFewRows, "ols: more coefficients than observations");
  const Matrix design = intercept ? with_intercept(predictors, n) : predictors;
  return solve_qr(response, design, intercept, predictors.cols());
}

LinearFit wls(const Vector& response, const Matrix& predictors, const Vector& weights,
              bool intercept) {
  const Eigen::Index n = response.size();
  if (weights.size() != n)
    throw Error(ErrorCode::InvalidSpec, "wls: weight length must match response length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw Error(ErrorCode::NonPositiveWeight,
                  "wls: weight " + std::to_string(i) + " is not a positive finite value");

  const Vector root = weights.array().sqrt();
  const Matrix design = intercept ? with_intercept(predictors, n) : predictors;
  const Matrix scaled = root.asDiagonal() * design;
  const Vector scaled_resp = root.asDiagonal() * response;
  LinearFit fit = solve_qr(scaled_resp, scaled, intercept, predictors.cols());
  // residuals on the original scale
  Vector fitted = predictors * fit.coef;
  fitted.array() += fit.intercept;
  fit.residuals = response - fitted;
  return fit;
}

Matrix partial_out_strata(const Matrix& columns, const std::vector<int>& stratum, int n_strata) {
  const Eigen::Index n = columns.rows();
  if (static_cast<Eigen::Index>(stratum.size()) != n)
    throw Error(ErrorCode::InvalidSpec, "partial_out_strata: label length mismatch");
  std::vector<double> count(n_strata, 0.0);
  Matrix sums = Matrix::Zero(n_strata, columns.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = stratum[i];
    if (s < 1 || s > n_strata)
      throw Error(ErrorCode::InvalidSpec, "partial_out_strata: label out of range");
    count[s - 1] += 1.0;
    sums.row(s - 1) += columns.row(i);
  }
  for (int s = 0; s < n_strata; ++s) {
    if (count[s] == 0.0)
      throw Error(ErrorCode::DegenerateStratum, "empty stratum " + std::to_string(s + 1));
    sums.row(s) /= count[s];
  }
  Matrix out(n, columns.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = columns.row(i) - sums.row(stratum[i] - 1);
  return out;
}

EigenSpectrum sym_eigen(const Matrix& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorCode::InvalidSpec, "sym_eigen: matrix must be square");
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorCode::NoConvergence, "sym_eigen: eigenvalue iteration did not converge");
  const Eigen::Index m = a.rows();
  EigenSpectrum spec;
  spec.lambdas.resize(m);
  spec.basis.resize(m, m);
  // Eigen returns ascending order; flip to descending
  for (Eigen::Index k = 0; k < m; ++k) {
    spec.lambdas[k] = solver.eigenvalues()[m - 1 - k];
    spec.basis.col(k) = solver.eigenvectors().col(m - 1 - k);
  }
  return spec;
}

Matrix inv_sqrt_psd(const Matrix& a) {
  const EigenSpectrum spec = sym_eigen(a);
  const double norm = spec.lambdas.cwiseAbs().maxCoeff();
  const double floor = kPsdFloorFactor * norm;
  const double min_eig = spec.lambdas.minCoeff();
  if (norm == 0.0 || min_eig < -1e-10 * norm || min_eig < floor) {
    std::ostringstream msg;
    msg << "inv_sqrt_psd: eigenvalue " << min_eig << " below psd floor " << floor;
    throw Error(ErrorCode::NearSingular, msg.str());
  }
  Vector inv_root = spec.lambdas.array().sqrt().inverse();
  return spec.basis * inv_root.asDiagonal() * spec.basis.transpose();
}

MomentSet moments(const Vector& z, const Matrix& y) {
  const Eigen::Index n = z.size();
  MomentSet m;
  m.z_mean = z.mean();
  m.y_mean = y.colwise().mean();
  const Matrix yc = y.rowwise() - m.y_mean.transpose();
  const Vector zc = z.array() - m.z_mean;
  m.s_yy = (yc.transpose() * yc) / static_cast<double>(n);
  m.s_yz = (yc.transpose() * zc) / static_cast<double>(n);
  m.s_zz = m.z_mean * (1.0 - m.z_mean);
  return m;
}

WeightedMoments weighted_moments(const Vector& z, const Matrix& y, const Vector& w) {
  const Eigen::Index n = z.size();
  const double dn = static_cast<double>(n);
  WeightedMoments m;
  m.s11 = w.sum() / dn;
  m.sy1 = (y.transpose() * w) / dn;
  m.sz1 = w.dot(z) / dn;
  m.syy = (y.transpose() * w.asDiagonal() * y) / dn;
  m.syz = (y.transpose() * (w.array() * z.array()).matrix()) / dn;
  m.szz = (w.array() * z.array() * z.array()).sum() / dn;
  m.phi_yy = m.syy - m.sy1 * m.sy1.transpose() / m.s11;
  m.phi_yz = m.syz - m.sy1 * (m.sz1 / m.s11);
  m.phi_zz = m.szz - m.sz1 * m.sz1 / m.s11;
  m.y_wmean = m.sy1 / m.s11;
  return m;
}

}  // namespace invreg::num
