#include "invreg/sre.hpp"

#include <cmath>

#include "invreg/inference.hpp"

namespace invreg::sre {

namespace {

void require_strata(const StudyData& data) {
  if (!data.has_strata())
    throw Error(ErrorCode::InvalidSpec, "stratified analysis needs a stratum column");
}

}  // namespace

StratifiedFit fit_regression(const StudyData& data) {
  require_strata(data);
  const int n = data.n();
  const int l = data.L();
  const int s_count = data.S();
  const double dn = static_cast<double>(n);

  StratifiedFit f;
  f.y_tilde = num::partial_out_strata(data.y(), data.stratum(), s_count);
  Matrix zt = num::partial_out_strata(data.z(), data.stratum(), s_count);
  f.z_tilde = zt.col(0);

  f.a_zz = f.z_tilde.squaredNorm() / dn;
  f.a_yy = f.y_tilde.transpose() * f.y_tilde / dn;
  f.a_yz = f.y_tilde.transpose() * f.z_tilde / dn;

  const num::LinearFit inv = num::ols(f.z_tilde, f.y_tilde, false);
  f.beta_sr = inv.coef;
  f.residuals = inv.residuals;  // equals the full (G, Y) regression residuals
  f.tau_sr = f.a_yz / f.a_zz;
  f.tau_c_sr = f.beta_sr.dot(f.tau_sr);

  f.stratum_sizes.assign(s_count, 0);
  f.zbar_by_stratum.assign(s_count, 0.0);
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    ++f.stratum_sizes[s];
    f.zbar_by_stratum[s] += data.z()[i];
  }
  double a_zz_check = 0.0;
  for (int s = 0; s < s_count; ++s) {
    f.zbar_by_stratum[s] /= f.stratum_sizes[s];
    a_zz_check +=
        (f.stratum_sizes[s] / dn) * f.zbar_by_stratum[s] * (1.0 - f.zbar_by_stratum[s]);
  }
  f.a_zz_identity_err = std::abs(f.a_zz - a_zz_check);

  f.s_yy_by_stratum.assign(s_count, Matrix::Zero(l, l));
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    const Vector yc = f.y_tilde.row(i).transpose();
    f.s_yy_by_stratum[s] += yc * yc.transpose();
  }
  for (int s = 0; s < s_count; ++s) f.s_yy_by_stratum[s] /= f.stratum_sizes[s];

  {
    const Eigen::LDLT<Matrix> ldlt(f.a_yy);
    const Vector rhs = f.a_zz * ldlt.solve(f.tau_sr);
    const double scale = std::max(f.beta_sr.norm(), rhs.norm());
    f.prop2_rel_err = scale == 0.0 ? 0.0 : (f.beta_sr - rhs).norm() / scale;
  }
  return f;
}

StratificationFit fit_stratification(const StudyData& data) {
  require_strata(data);
  StratificationFit out;
  const int s_count = data.S();
  const double dn = static_cast<double>(data.n());
  out.tau_aggregate = Vector::Zero(data.L());
  out.tau_c_aggregate = 0.0;
  for (int s = 1; s <= s_count; ++s) {
    StudyData slice = data.stratum_slice(s);
    try {
      out.by_stratum.push_back(cre::fit(slice));
    } catch (const Error& e) {
      throw Error(e.code(), "stratum " + data.stratum_labels()[s - 1] + ": " + e.what());
    }
    out.labels.push_back(data.stratum_labels()[s - 1]);
    out.sizes.push_back(slice.n());
    const double w = slice.n() / dn;
    out.tau_aggregate += w * out.by_stratum.back().tau;
    out.tau_c_aggregate += w * out.by_stratum.back().tau_c;
  }
  return out;
}

WaldResult wald_test_sr(const StratifiedFit& fit, const StudyData&) {
  const Matrix vbeta = detail::hc0_partialled(fit.y_tilde, fit.residuals);
  return detail::wald_from(fit.beta_sr, vbeta);
}

Matrix influence_terms_sr(const StratifiedFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Vector ayy_beta = fit.a_yy * fit.beta_sr;
  Matrix r(n, l);
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    const Vector yc = fit.y_tilde.row(i).transpose();
    const double zc = fit.z_tilde[i];
    const double s_zz = fit.zbar_by_stratum[s] * (1.0 - fit.zbar_by_stratum[s]);
    r.row(i) = (yc * yc.dot(fit.beta_sr) - fit.s_yy_by_stratum[s] * fit.beta_sr -
                ((zc * zc - s_zz) / fit.a_zz) * ayy_beta + 2.0 * fit.residuals[i] * yc)
                   .transpose();
  }
  return r;
}

double variance_normal_sr(const StratifiedFit& fit, const StudyData& data) {
  const Matrix r = influence_terms_sr(fit, data);
  const Vector proj = r * fit.beta_sr;
  const double meat = proj.squaredNorm() / static_cast<double>(data.n());
  return meat / (fit.a_zz * fit.a_zz);
}

wchi2::WeightedChiSq gamma_null_sr(const StratifiedFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix meat = fit.y_tilde.transpose() *
                      fit.residuals.array().square().matrix().asDiagonal() * fit.y_tilde / dn;
  const Matrix w = num::inv_sqrt_psd(fit.a_yy);
  const Matrix gamma = (w * meat * w) / fit.a_zz;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

ConfInterval confidence_interval_sr(const StratifiedFit& fit, const StudyData& data,
                                    const DesignSpec& spec) {
  return detail::dual_regime_interval(
      fit.tau_c_sr, data.n(), spec, [&] { return variance_normal_sr(fit, data); },
      [&] { return gamma_null_sr(fit, data); }, [&] { return wald_test_sr(fit, data); });
}

}  // namespace invreg::sre
