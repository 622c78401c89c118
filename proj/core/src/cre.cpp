#include "invreg/cre.hpp"

#include <cmath>

#include "invreg/inference.hpp"

namespace invreg::cre {

namespace {

double rel_diff(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace

CompositeFit fit(const StudyData& data) {
  const Vector& z = data.z();
  const Matrix& y = data.y();
  const int n = data.n();
  const double zbar = z.mean();
  if (zbar <= 0.0 || zbar >= 1.0)
    throw Error(ErrorCode::DegenerateTreatment, "treatment arm is empty");

  CompositeFit f;
  f.moments = num::moments(z, y);

  const num::LinearFit inv = num::ols(z, y, true);
  f.beta = inv.coef;
  f.beta0 = inv.intercept;
  f.residuals = inv.residuals;

  // difference in group means
  const double n1 = z.sum(), n0 = n - n1;
  const Vector mean1 = (y.transpose() * z) / n1;
  const Vector mean0 = (y.transpose() * (Vector::Ones(n) - z)) / n0;
  f.tau = mean1 - mean0;
  f.tau_c = f.beta.dot(f.tau);

  // Sigma-hat from arm-specific covariances
  const int l = data.L();
  Matrix cov1 = Matrix::Zero(l, l), cov0 = Matrix::Zero(l, l);
  for (int i = 0; i < n; ++i) {
    if (z[i] == 1.0) {
      const Vector d = y.row(i).transpose() - mean1;
      cov1 += d * d.transpose();
    } else {
      const Vector d = y.row(i).transpose() - mean0;
      cov0 += d * d.transpose();
    }
  }
  cov1 /= n1;
  cov0 /= n0;
  f.sigma_hat = cov1 / (1.0 - zbar) + cov0 / zbar;

  // form 1: beta = zbar(1-zbar) S_yy^-1 tau
  {
    const Eigen::LDLT<Matrix> ldlt(f.moments.s_yy);
    const Vector rhs = f.moments.s_zz * ldlt.solve(f.tau);
    f.prop1_form1_rel_err = rel_diff(f.beta, rhs);
  }
  // form 2: beta = Sigma^-1 tau / (1 + tau' Sigma^-1 tau), needs Sigma invertible
  {
    const num::EigenSpectrum es = num::sym_eigen(f.sigma_hat);
    const double max_l = es.lambdas.cwiseAbs().maxCoeff();
    f.sigma_invertible = max_l > 0.0 && es.lambdas.minCoeff() > 1e-12 * max_l;
    if (f.sigma_invertible) {
      const Eigen::LDLT<Matrix> ldlt(f.sigma_hat);
      const Vector si_tau = ldlt.solve(f.tau);
      const Vector rhs = si_tau / (1.0 + f.tau.dot(si_tau));
      f.prop1_form2_rel_err = rel_diff(f.beta, rhs);
    }
  }
  // two-step route: slope of beta'y on (1, z)
  {
    const Vector composite = y * f.beta;
    const num::LinearFit step2 = num::ols(composite, z, true);
    const double scale = std::max(std::abs(f.tau_c), std::abs(step2.coef[0]));
    f.two_step_rel_err = scale == 0.0 ? 0.0 : std::abs(f.tau_c - step2.coef[0]) / scale;
  }
  return f;
}

WaldResult wald_test(const CompositeFit& fit, const StudyData& data) {
  const Matrix yc = data.y().rowwise() - fit.moments.y_mean.transpose();
  const Matrix vbeta = detail::hc0_partialled(yc, fit.residuals);
  return detail::wald_from(fit.beta, vbeta);
}

Matrix influence_terms(const CompositeFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Matrix& y = data.y();
  const num::MomentSet& m = fit.moments;
  const Vector syy_beta = m.s_yy * fit.beta;

  Matrix r(n, l);
  for (int i = 0; i < n; ++i) {
    const Vector yc = y.row(i).transpose() - m.y_mean;
    const double zc = data.z()[i] - m.z_mean;
    r.row(i) = (yc * (yc.dot(fit.beta)) - syy_beta -
                ((zc * zc - m.s_zz) / m.s_zz) * syy_beta + 2.0 * fit.residuals[i] * yc)
                   .transpose();
  }
  return r;
}

double variance_normal(const CompositeFit& fit, const StudyData& data) {
  const Matrix r = influence_terms(fit, data);
  const Vector proj = r * fit.beta;
  const double meat = proj.squaredNorm() / static_cast<double>(data.n());
  return meat / (fit.moments.s_zz * fit.moments.s_zz);
}

wchi2::WeightedChiSq gamma_null(const CompositeFit& fit, const StudyData& data) {
  const int n = data.n();
  const Matrix yc = data.y().rowwise() - fit.moments.y_mean.transpose();
  const Matrix meat = yc.transpose() *
                      fit.residuals.array().square().matrix().asDiagonal() * yc /
                      static_cast<double>(n);
  const Matrix w = num::inv_sqrt_psd(fit.moments.s_yy);
  const Matrix gamma = (w * meat * w) / fit.moments.s_zz;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

ConfInterval confidence_interval(const CompositeFit& fit, const StudyData& data,
                                 const DesignSpec& spec) {
  return detail::dual_regime_interval(
      fit.tau_c, data.n(), spec, [&] { return variance_normal(fit, data); },
      [&] { return gamma_null(fit, data); }, [&] { return wald_test(fit, data); });
}

}  // namespace invreg::cre
