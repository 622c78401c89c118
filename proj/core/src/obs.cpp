#include "invreg/obs.hpp"

#include <cmath>
#include <sstream>

#include "invreg/inference.hpp"
#include "invreg/logit_mle.hpp"

namespace invreg::obs {

namespace {

double rel_diff(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

Matrix design_with_intercept(const Matrix& x) {
  Matrix d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

}  // namespace

PropensityFit fit_propensity(const StudyData& data) {
  if (!data.has_covariates())
    throw Error(ErrorCode::InvalidSpec, "propensity estimation needs covariates");
  const Matrix design = design_with_intercept(data.x());
  const num::LogitMle mle = num::logistic_mle(data.z(), design);

  PropensityFit f;
  f.alpha = mle.coef;
  f.scores = mle.fitted;
  f.converged = mle.converged;
  f.iterations = mle.iterations;
  f.info = mle.neg_hessian;

  const int n = data.n();
  const int p = static_cast<int>(design.cols());
  f.weights.resize(n);
  f.score_contribs.resize(n, p);
  f.grad_w.resize(n, p);
  int n_extreme = 0;
  for (int i = 0; i < n; ++i) {
    const double e = f.scores[i];
    const double z = data.z()[i];
    f.weights[i] = z / e + (1.0 - z) / (1.0 - e);
    f.score_contribs.row(i) = (z - e) * design.row(i);
    const double dwde = -z / (e * e) + (1.0 - z) / ((1.0 - e) * (1.0 - e));
    f.grad_w.row(i) = dwde * e * (1.0 - e) * design.row(i);
    if (e < kExtremeScore || e > 1.0 - kExtremeScore) ++n_extreme;
  }
  if (n_extreme > 0) {
    std::ostringstream msg;
    msg << n_extreme << " fitted propensity scores outside [" << kExtremeScore << ", "
        << 1.0 - kExtremeScore << "]; weights not trimmed";
    f.warnings.push_back(msg.str());
  }
  return f;
}

ObsFit fit(const StudyData& data, WeightsSource source) {
  ObsFit f;
  f.source = source;
  if (source == WeightsSource::ESTIMATE) {
    f.propensity = fit_propensity(data);
  } else {
    if (!data.has_user_weights())
      throw Error(ErrorCode::InvalidSpec, "user weights requested but none supplied");
    f.user_w = data.user_weights();
  }
  const Vector& w = f.w();
  const Vector& z = data.z();
  const Matrix& y = data.y();
  const int n = data.n();
  const int l = data.L();

  f.wm = num::weighted_moments(z, y, w);

  const num::LinearFit inv = num::wls(z, y, w, true);
  f.beta_os = inv.coef;
  f.beta0_os = inv.intercept;
  f.residuals = inv.residuals;

  f.tau_os = f.wm.phi_yz / f.wm.phi_zz;
  f.tau_c_os = f.beta_os.dot(f.tau_os);

  // weighted arm covariances for Sigma_os
  const double sw1 = (w.array() * z.array()).sum();
  const double sw0 = (w.array() * (1.0 - z.array())).sum();
  const Vector wy1 = y.transpose() * (w.array() * z.array()).matrix() / sw1;
  const Vector wy0 = y.transpose() * (w.array() * (1.0 - z.array())).matrix() / sw0;
  Matrix cov1 = Matrix::Zero(l, l), cov0 = Matrix::Zero(l, l);
  for (int i = 0; i < n; ++i) {
    if (z[i] == 1.0) {
      const Vector d = y.row(i).transpose() - wy1;
      cov1 += w[i] * d * d.transpose();
    } else {
      const Vector d = y.row(i).transpose() - wy0;
      cov0 += w[i] * d * d.transpose();
    }
  }
  f.sigma_os_hat = (cov1 + cov0) / (static_cast<double>(n) * f.wm.phi_zz);

  {
    const Eigen::LDLT<Matrix> ldlt(f.wm.phi_yy);
    const Vector rhs = f.wm.phi_zz * ldlt.solve(f.tau_os);
    f.prop3_form1_rel_err = rel_diff(f.beta_os, rhs);
  }
  {
    const num::EigenSpectrum es = num::sym_eigen(f.sigma_os_hat);
    const double max_l = es.lambdas.cwiseAbs().maxCoeff();
    f.sigma_invertible = max_l > 0.0 && es.lambdas.minCoeff() > 1e-12 * max_l;
    if (f.sigma_invertible) {
      const Eigen::LDLT<Matrix> ldlt(f.sigma_os_hat);
      const Vector si_tau = ldlt.solve(f.tau_os);
      const Vector rhs = si_tau / (1.0 + f.tau_os.dot(si_tau));
      f.prop3_form2_rel_err = rel_diff(f.beta_os, rhs);
    }
  }
  {
    const Vector composite = y * f.beta_os;
    const num::LinearFit step2 = num::wls(composite, z, w, true);
    const double scale = std::max(std::abs(f.tau_c_os), std::abs(step2.coef[0]));
    f.two_step_rel_err = scale == 0.0 ? 0.0 : std::abs(f.tau_c_os - step2.coef[0]) / scale;
  }
  return f;
}

Matrix psi_terms(const ObsFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Matrix yc = data.y().rowwise() - fit.wm.y_wmean.transpose();
  const Vector& w = fit.w();

  Matrix psi(n, l);
  for (int i = 0; i < n; ++i)
    psi.row(i) = fit.residuals[i] * w[i] * yc.row(i);

  if (fit.source == WeightsSource::ESTIMATE) {
    const PropensityFit& pf = *fit.propensity;
    const int p = static_cast<int>(pf.alpha.size());
    Matrix corr = Matrix::Zero(l, p);  // n^-1 sum varsigma_j (y_j - m_w) grad_w_j'
    for (int i = 0; i < n; ++i)
      corr += fit.residuals[i] * yc.row(i).transpose() * pf.grad_w.row(i);
    corr /= static_cast<double>(n);
    const Eigen::LDLT<Matrix> info(pf.info);
    if (info.info() != Eigen::Success)
      throw Error(ErrorCode::NearSingular, "propensity information matrix is singular");
    const Matrix corr_iinv = info.solve(corr.transpose()).transpose();  // l x p
    psi += pf.score_contribs * corr_iinv.transpose();
  }
  return psi;
}

WaldResult wald_test_os(const ObsFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix psi = psi_terms(fit, data);
  const Matrix meat = psi.transpose() * psi / dn;
  const Eigen::LDLT<Matrix> phi(fit.wm.phi_yy);
  if (phi.info() != Eigen::Success)
    throw Error(ErrorCode::NearSingular, "phi_yy is singular");
  const Matrix vbeta = phi.solve(phi.solve(meat).transpose()).transpose() / dn;
  return detail::wald_from(fit.beta_os, vbeta);
}

Matrix influence_terms_os(const ObsFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Matrix yc = data.y().rowwise() - fit.wm.y_wmean.transpose();
  const Vector& w = fit.w();
  const Vector phi_beta = fit.wm.phi_yy * fit.beta_os;
  const Matrix psi = psi_terms(fit, data);

  // propensity-estimation corrections (zero for user weights)
  Vector moment_corr_scalar = Vector::Zero(n);   // from the weight-mean block
  Matrix moment_corr = Matrix::Zero(n, l);       // from the yy' block
  if (fit.source == WeightsSource::ESTIMATE) {
    const PropensityFit& pf = *fit.propensity;
    const int p = static_cast<int>(pf.alpha.size());
    Matrix cyy = Matrix::Zero(l, p);  // n^-1 sum (y-m)(y-m)' beta grad_w'
    Eigen::RowVectorXd gbar = Eigen::RowVectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      cyy += (yc.row(i).transpose() * (yc.row(i) * fit.beta_os)) * pf.grad_w.row(i);
      gbar += pf.grad_w.row(i);
    }
    cyy /= static_cast<double>(n);
    gbar /= static_cast<double>(n);
    const Eigen::LDLT<Matrix> info(pf.info);
    const Matrix cyy_iinv = info.solve(cyy.transpose()).transpose();  // l x p
    const Vector gbar_iinv = info.solve(gbar.transpose());            // p
    moment_corr = pf.score_contribs * cyy_iinv.transpose();
    moment_corr_scalar = pf.score_contribs * gbar_iinv;
  }

  Matrix r(n, l);
  for (int i = 0; i < n; ++i) {
    const Vector yci = yc.row(i).transpose();
    Vector ri = w[i] * yci * yci.dot(fit.beta_os) - phi_beta;
    ri += moment_corr.row(i).transpose();
    ri -= 0.5 * ((w[i] - fit.wm.s11) + moment_corr_scalar[i]) * phi_beta;
    ri += 2.0 * psi.row(i).transpose();
    r.row(i) = ri.transpose();
  }
  return r;
}

double variance_normal_os(const ObsFit& fit, const StudyData& data) {
  const Matrix r = influence_terms_os(fit, data);
  const Vector proj = r * fit.beta_os;
  return 4.0 * proj.squaredNorm() / static_cast<double>(data.n());
}

wchi2::WeightedChiSq gamma_null_os(const ObsFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix psi = psi_terms(fit, data);
  const Matrix meat = psi.transpose() * psi / dn;
  const Matrix w = num::inv_sqrt_psd(fit.wm.phi_yy);
  const Matrix gamma = (w * meat * w) / fit.wm.phi_zz;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

ConfInterval confidence_interval_os(const ObsFit& fit, const StudyData& data,
                                    const DesignSpec& spec) {
  return detail::dual_regime_interval(
      fit.tau_c_os, data.n(), spec, [&] { return variance_normal_os(fit, data); },
      [&] { return gamma_null_os(fit, data); }, [&] { return wald_test_os(fit, data); });
}

}  // namespace invreg::obs
