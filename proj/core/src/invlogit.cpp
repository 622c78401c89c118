#include "invreg/invlogit.hpp"

#include <cmath>

#include "invreg/inference.hpp"
#include "invreg/logit_mle.hpp"
#include "invreg/numkernel.hpp"

namespace invreg::invlogit {

namespace {

Matrix logit_design(const StudyData& data, bool stratified) {
  const int n = data.n();
  const int l = data.L();
  if (!stratified) {
    Matrix d(n, 1 + l);
    d.col(0).setOnes();
    d.rightCols(l) = data.y();
    return d;
  }
  if (!data.has_strata())
    throw Error(ErrorCode::InvalidSpec, "stratified inverse logistic fit needs strata");
  const int s_count = data.S();
  Matrix d = Matrix::Zero(n, s_count + l);
  for (int i = 0; i < n; ++i) d(i, data.stratum()[i] - 1) = 1.0;
  d.rightCols(l) = data.y();
  return d;
}

// pooled within-stratum products used by the stratified Wald and spectrum
struct StratPieces {
  Matrix y_tilde;
  Vector z_tilde;
  Matrix b;       // sum_s pi_s zbar_s(1-zbar_s) S_yy|s
  Matrix kernel;  // n^-1 sum (z_i - zbar_s)^2 y~ y~'
  double a_zz;    // sum_s pi_s zbar_s(1-zbar_s)
};

StratPieces strat_pieces(const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const int s_count = data.S();
  const double dn = static_cast<double>(n);
  StratPieces p;
  p.y_tilde = num::partial_out_strata(data.y(), data.stratum(), s_count);
  p.z_tilde = num::partial_out_strata(data.z(), data.stratum(), s_count).col(0);

  std::vector<double> size(s_count, 0.0), zbar(s_count, 0.0);
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    size[s] += 1.0;
    zbar[s] += data.z()[i];
  }
  p.a_zz = 0.0;
  for (int s = 0; s < s_count; ++s) {
    zbar[s] /= size[s];
    p.a_zz += size[s] / dn * zbar[s] * (1.0 - zbar[s]);
  }
  // b = sum_s pi_s pq_s S_yy|s = n^-1 sum_i pq_{s(i)} y~ y~'
  p.b = Matrix::Zero(l, l);
  p.kernel = Matrix::Zero(l, l);
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    const double pq = zbar[s] * (1.0 - zbar[s]);
    const Vector yc = p.y_tilde.row(i).transpose();
    p.b += pq * yc * yc.transpose();
    p.kernel += p.z_tilde[i] * p.z_tilde[i] * yc * yc.transpose();
  }
  p.b /= dn;
  p.kernel /= dn;
  return p;
}

}  // namespace

LogitFit fit_logit(const StudyData& data, bool stratified) {
  const Matrix design = logit_design(data, stratified);
  const num::LogitMle mle = num::logistic_mle(data.z(), design);
  const int l = data.L();
  const int head = static_cast<int>(design.cols()) - l;

  LogitFit f;
  f.stratified = stratified;
  f.gamma_g = mle.coef.head(head);
  f.gamma = mle.coef.tail(l);
  f.fitted = mle.fitted;
  f.score = mle.score;
  f.hessian = mle.neg_hessian;
  f.converged = mle.converged;
  f.iterations = mle.iterations;

  if (!stratified) {
    const Vector& z = data.z();
    const double n1 = z.sum(), n0 = data.n() - n1;
    const Vector mean1 = data.y().transpose() * z / n1;
    const Vector mean0 = data.y().transpose() * (Vector::Ones(data.n()) - z) / n0;
    f.tau = mean1 - mean0;
  } else {
    const StratPieces p = strat_pieces(data);
    f.tau = p.y_tilde.transpose() * p.z_tilde /
            (static_cast<double>(data.n()) * p.a_zz);
  }
  f.tau_c_logit = f.gamma.dot(f.tau);
  return f;
}

WaldResult wald_logit(const LogitFit& fit, const StudyData& data) {
  const int n = data.n();
  const double dn = static_cast<double>(n);
  Matrix vgamma;
  if (!fit.stratified) {
    const num::MomentSet m = num::moments(data.z(), data.y());
    const Matrix yc = data.y().rowwise() - m.y_mean.transpose();
    const Vector zc = (data.z().array() - m.z_mean).matrix();
    const Matrix kernel =
        yc.transpose() * zc.array().square().matrix().asDiagonal() * yc / dn;
    const Eigen::LDLT<Matrix> syy(m.s_yy);
    if (syy.info() != Eigen::Success)
      throw Error(ErrorCode::NearSingular, "S_yy is singular");
    vgamma = syy.solve(syy.solve(kernel).transpose()).transpose() /
             (dn * m.s_zz * m.s_zz);
  } else {
    const StratPieces p = strat_pieces(data);
    const Eigen::LDLT<Matrix> b(p.b);
    if (b.info() != Eigen::Success)
      throw Error(ErrorCode::NearSingular, "pooled weighted S_yy is singular");
    vgamma = b.solve(b.solve(p.kernel).transpose()).transpose() / dn;
  }
  return detail::wald_from(fit.gamma, vgamma);
}

wchi2::WeightedChiSq null_spectrum_logit(const LogitFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  Matrix gamma_mat;
  if (!fit.stratified) {
    const num::MomentSet m = num::moments(data.z(), data.y());
    const Matrix yc = data.y().rowwise() - m.y_mean.transpose();
    const Vector zc = (data.z().array() - m.z_mean).matrix();
    const Matrix kernel =
        yc.transpose() * zc.array().square().matrix().asDiagonal() * yc / dn;
    const Matrix w = num::inv_sqrt_psd(m.s_yy);
    gamma_mat = (w * kernel * w) / (m.s_zz * m.s_zz);
  } else {
    const StratPieces p = strat_pieces(data);
    const Matrix w = num::inv_sqrt_psd(p.b);
    gamma_mat = (w * p.kernel * w) / p.a_zz;
  }
  return detail::make_null_spectrum(num::sym_eigen(gamma_mat).lambdas);
}

}  // namespace invreg::invlogit
