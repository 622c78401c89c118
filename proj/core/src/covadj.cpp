#include "invreg/covadj.hpp"

#include <algorithm>
#include <cmath>

#include "invreg/inference.hpp"
#include "invreg/rng.hpp"

namespace invreg::covadj {

namespace {

double rel_diff(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

// residuals of every column of m on (1, x) by OLS
Matrix residualize(const Matrix& m, const Matrix& x) {
  const Eigen::Index n = m.rows();
  Matrix design(n, x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  return m - design * qr.solve(m);
}

// weighted projection coefficients of columns of m on (1, x); returns
// residual matrix and keeps the per-unit fitted values implicit
Matrix residualize_weighted(const Matrix& m, const Matrix& x, const Vector& w) {
  const Eigen::Index n = m.rows();
  Matrix design(n, x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  const Vector root = w.array().sqrt();
  Eigen::ColPivHouseholderQR<Matrix> qr(root.asDiagonal() * design);
  const Matrix coef = qr.solve(root.asDiagonal() * m);
  return m - design * coef;
}

Matrix d_matrix(double r, int k, int l) {
  Matrix d = Matrix::Zero(k + l, k + l);
  d.topLeftCorner(k, k) = -r * Matrix::Identity(k, k);
  d.bottomRightCorner(l, l) = Matrix::Identity(l, l);
  return d;
}

}  // namespace

// ---------- CRE with covariates ----------

AdjustedFit fit_cre_adjusted(const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const int k = data.K();
  const Vector& z = data.z();
  const Matrix& y = data.y();

  AdjustedFit f;
  f.design = Design::CRE;

  const Matrix xy = k > 0 ? hstack(data.x(), y) : y;
  const num::LinearFit inv = num::ols(z, xy, true);
  f.beta_x = inv.coef.head(k);
  f.beta_a = inv.coef.tail(l);
  f.residuals = inv.residuals;

  f.y_check = k > 0 ? residualize(y, data.x()) : Matrix(y.rowwise() - y.colwise().mean());
  {
    Matrix zc = k > 0 ? residualize(z, data.x())
                      : Matrix((z.array() - z.mean()).matrix());
    f.z_check = zc.col(0);
  }
  const double dn = static_cast<double>(n);
  f.phi_check = f.y_check.transpose() * f.y_check / dn;
  const double a_zz = f.z_check.squaredNorm() / dn;
  f.tau_a = f.y_check.transpose() * f.z_check / (dn * a_zz);
  f.tau_c_a = f.beta_a.dot(f.tau_a);
  const double zbar = z.mean();
  f.s_zz = zbar * (1.0 - zbar);
  f.y_mean = y.colwise().mean();
  f.x_mean = k > 0 ? Vector(data.x().colwise().mean()) : Vector(0);

  {
    const Eigen::LDLT<Matrix> ldlt(f.phi_check);
    const Vector rhs = a_zz * ldlt.solve(f.tau_a);
    f.identity_rel_err = rel_diff(f.beta_a, rhs);
  }
  {
    // two-step route: slope of z in (beta' y) ~ (1, z, x)
    const Matrix zx = k > 0 ? hstack(Matrix(z), data.x()) : Matrix(z);
    const num::LinearFit step2 = num::ols(y * f.beta_a, zx, true);
    const double slope = step2.coef[0];
    const double scale = std::max(std::abs(f.tau_c_a), std::abs(slope));
    f.two_step_rel_err = scale == 0.0 ? 0.0 : std::abs(f.tau_c_a - slope) / scale;
  }
  return f;
}

WaldResult wald_cre_adjusted(const AdjustedFit& fit, const StudyData&) {
  const Matrix vbeta = detail::hc0_partialled(fit.y_check, fit.residuals);
  return detail::wald_from(fit.beta_a, vbeta);
}

double variance_cre_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const int n = data.n();
  const Matrix yc = data.y().rowwise() - fit.y_mean.transpose();
  const Vector phi_beta = fit.phi_check * fit.beta_a;
  const double zbar = data.z().mean();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double zc = data.z()[i] - zbar;
    const Vector ri = fit.y_check.row(i).transpose() * yc.row(i).dot(fit.beta_a) - phi_beta -
                      ((zc * zc - fit.s_zz) / fit.s_zz) * phi_beta +
                      2.0 * fit.residuals[i] * fit.y_check.row(i).transpose();
    const double proj = fit.beta_a.dot(ri);
    acc += proj * proj;
  }
  return acc / static_cast<double>(n) / (fit.s_zz * fit.s_zz);
}

wchi2::WeightedChiSq gamma_cre_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix meat = fit.y_check.transpose() *
                      fit.residuals.array().square().matrix().asDiagonal() * fit.y_check / dn;
  const Matrix w = num::inv_sqrt_psd(fit.phi_check);
  const Matrix gamma = (w * meat * w) / fit.s_zz;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

ConfInterval confidence_interval_cre_adjusted(const AdjustedFit& fit, const StudyData& data,
                                              const DesignSpec& spec) {
  return detail::dual_regime_interval(
      fit.tau_c_a, data.n(), spec, [&] { return variance_cre_adjusted(fit, data); },
      [&] { return gamma_cre_adjusted(fit, data); },
      [&] { return wald_cre_adjusted(fit, data); });
}

// ---------- SRE with covariates (three-step) ----------

namespace {

AdjustedFit fit_sre_core(const StudyData& data) {
  if (!data.has_strata())
    throw Error(ErrorCode::InvalidSpec, "adjusted stratified analysis needs strata");
  const int n = data.n();
  const int l = data.L();
  const int s_count = data.S();
  const double dn = static_cast<double>(n);

  AdjustedFit f;
  f.design = Design::SRE_REGRESSION;

  // covariates constant within every stratum are collinear with G; drop them
  // (their inverse-regression coefficient is zero by convention)
  Matrix x_all = data.x();
  Matrix x_tilde_all = data.K() > 0
                           ? num::partial_out_strata(x_all, data.stratum(), s_count)
                           : Matrix(n, 0);
  for (int j = 0; j < data.K(); ++j) {
    const double scale = x_all.col(j).norm() + 1.0;
    if (x_tilde_all.col(j).norm() > 1e-12 * scale * std::sqrt(dn)) f.kept_x.push_back(j);
  }
  const int k = static_cast<int>(f.kept_x.size());
  Matrix x_kept(n, k);
  for (int j = 0; j < k; ++j) x_kept.col(j) = x_all.col(f.kept_x[j]);

  const Matrix u = k > 0 ? hstack(x_kept, data.y()) : data.y();
  f.u_tilde = num::partial_out_strata(u, data.stratum(), s_count);
  f.z_tilde = num::partial_out_strata(data.z(), data.stratum(), s_count).col(0);

  const num::LinearFit inv = num::ols(f.z_tilde, f.u_tilde, false);
  f.beta_x = inv.coef.head(k);
  f.beta_a = inv.coef.tail(l);
  f.residuals = inv.residuals;

  f.a_uu = f.u_tilde.transpose() * f.u_tilde / dn;
  f.a_zz = f.z_tilde.squaredNorm() / dn;
  f.tau_sru = f.u_tilde.transpose() * f.z_tilde / (dn * f.a_zz);
  f.tau_a = f.tau_sru.tail(l);

  // step 2 and step 3: composite outcomes regressed on (G, Z)
  const Vector yc = data.y() * f.beta_a;
  const Matrix yc_t = num::partial_out_strata(yc, data.stratum(), s_count);
  f.tau_c_y = f.z_tilde.dot(yc_t.col(0)) / (dn * f.a_zz);
  if (k > 0) {
    const Vector xc = x_kept * f.beta_x;
    const Matrix xc_t = num::partial_out_strata(xc, data.stratum(), s_count);
    f.tau_c_x = f.z_tilde.dot(xc_t.col(0)) / (dn * f.a_zz);
  } else {
    f.tau_c_x = 0.0;
  }

  f.stratum_sizes.assign(s_count, 0);
  f.zbar_by_stratum.assign(s_count, 0.0);
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    ++f.stratum_sizes[s];
    f.zbar_by_stratum[s] += data.z()[i];
  }
  for (int s = 0; s < s_count; ++s) f.zbar_by_stratum[s] /= f.stratum_sizes[s];
  f.s_uu_by_stratum.assign(s_count, Matrix::Zero(k + l, k + l));
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    const Vector uc = f.u_tilde.row(i).transpose();
    f.s_uu_by_stratum[s] += uc * uc.transpose();
  }
  for (int s = 0; s < s_count; ++s) f.s_uu_by_stratum[s] /= f.stratum_sizes[s];

  {
    const Eigen::LDLT<Matrix> ldlt(f.a_uu);
    const Vector rhs = f.a_zz * ldlt.solve(f.tau_sru);
    f.identity_rel_err = rel_diff(f.beta_u(), rhs);
  }
  return f;
}

}  // namespace

AdjustedFit fit_sre_adjusted(const StudyData& data, double r) {
  AdjustedFit f = fit_sre_core(data);
  f.r_used = r;
  f.tau_c_a = f.tau_c_y - r * f.tau_c_x;
  return f;
}

AdjustedFit fit_sre_adjusted(const StudyData& data, ROpt) {
  AdjustedFit f = fit_sre_core(data);
  // Thm-based plug-in: r_opt = cov(t_y, t_x)/var(t_x) assembled from the
  // variance formula at r in {-1, 0, +1}
  const double v_sum = variance_sre_adjusted(f, data, -1.0);   // var(t_y + t_x)
  const double v_diff = variance_sre_adjusted(f, data, 1.0);   // var(t_y - t_x)
  const double v_y = variance_sre_adjusted(f, data, 0.0);
  const double v_x = 0.5 * v_sum + 0.5 * v_diff - v_y;
  if (!(v_x > kZeroVarXTol))
    throw Error(ErrorCode::ZeroVarianceX,
                "var(tau_c_x) is numerically zero; r_opt undefined");
  f.r_opt_hat = (v_sum - v_diff) / (4.0 * v_x);
  f.r_used = f.r_opt_hat;
  f.tau_c_a = f.tau_c_y - f.r_used * f.tau_c_x;
  return f;
}

WaldResult wald_sre_adjusted(const AdjustedFit& fit, const StudyData&) {
  const Matrix vbeta = detail::hc0_partialled(fit.u_tilde, fit.residuals);
  const Vector beta = fit.beta_u();
  WaldResult w = detail::wald_from(beta, vbeta);
  // the stated null law has L degrees of freedom although the statistic
  // spans the K+L stacked coefficients
  w.df = static_cast<int>(fit.beta_a.size());
  w.p_value = prob::chi2_sf(w.statistic, w.df);
  return w;
}

double variance_sre_adjusted(const AdjustedFit& fit, const StudyData& data, double r) {
  const int n = data.n();
  const int k = static_cast<int>(fit.beta_x.size());
  const int l = static_cast<int>(fit.beta_a.size());
  const Matrix d = d_matrix(r, k, l);
  const Vector beta = fit.beta_u();

  const Eigen::LDLT<Matrix> a_uu_ldlt(fit.a_uu);
  const Matrix m3 = fit.a_uu * d * a_uu_ldlt.solve(Matrix::Identity(k + l, k + l));
  const Vector auu_beta_scaled = fit.a_uu * beta / fit.a_zz;

  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int s = data.stratum()[i] - 1;
    const Vector uc = fit.u_tilde.row(i).transpose();
    const double zc = fit.z_tilde[i];
    const double s_zz =
        fit.zbar_by_stratum[s] * (1.0 - fit.zbar_by_stratum[s]);
    Vector ri = d * (uc * uc.dot(beta) - fit.s_uu_by_stratum[s] * beta);
    ri -= (zc * zc - s_zz) * (d * auu_beta_scaled);
    ri += fit.residuals[i] * (m3 * uc);
    ri += fit.residuals[i] * (d * uc);
    const double proj = beta.dot(ri);
    acc += proj * proj;
  }
  return acc / static_cast<double>(n) / (fit.a_zz * fit.a_zz);
}

wchi2::WeightedChiSq gamma_sre_adjusted(const AdjustedFit& fit, const StudyData& data,
                                        double r) {
  if (r > 0.0)
    throw Error(ErrorCode::InvalidSpec,
                "gamma_sre_adjusted: D^(1/2) is not real for r > 0; use the bootstrap");
  const int k = static_cast<int>(fit.beta_x.size());
  const int l = static_cast<int>(fit.beta_a.size());
  const double dn = static_cast<double>(data.n());
  Matrix droot = Matrix::Zero(k + l, k + l);
  droot.topLeftCorner(k, k) = std::sqrt(-r) * Matrix::Identity(k, k);
  droot.bottomRightCorner(l, l) = Matrix::Identity(l, l);

  const Matrix meat = fit.u_tilde.transpose() *
                      fit.residuals.array().square().matrix().asDiagonal() * fit.u_tilde / dn;
  const Matrix w = num::inv_sqrt_psd(fit.a_uu);
  const Matrix gamma = (w * droot * meat * droot * w) / fit.a_zz;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

Bootstrap bootstrap_sre_ropt(const StudyData& data, int resamples, std::uint64_t seed,
                             double alpha) {
  if (resamples < 10)
    throw Error(ErrorCode::InvalidSpec, "bootstrap needs at least 10 resamples");
  const int n = data.n();
  const int s_count = data.S();
  std::vector<std::vector<int>> rows_by_stratum(s_count);
  for (int i = 0; i < n; ++i) rows_by_stratum[data.stratum()[i] - 1].push_back(i);

  std::vector<double> draws;
  draws.reserve(resamples);
  int failures = 0;
  for (int b = 0; b < resamples; ++b) {
    CounterRng rng(seed, 0x8000000000000000ULL + static_cast<std::uint64_t>(b));
    std::vector<int> pick;
    pick.reserve(n);
    for (const auto& rows : rows_by_stratum) {
      const int m = static_cast<int>(rows.size());
      for (int j = 0; j < m; ++j)
        pick.push_back(rows[static_cast<int>(rng.next_unit() * m) % m]);
    }
    Vector z(n);
    Matrix y(n, data.L());
    Matrix x(n, data.K());
    std::vector<int> stratum(n);
    for (int i = 0; i < n; ++i) {
      z[i] = data.z()[pick[i]];
      y.row(i) = data.y().row(pick[i]);
      if (data.K() > 0) x.row(i) = data.x().row(pick[i]);
      stratum[i] = data.stratum()[pick[i]];
    }
    try {
      StudyData boot = StudyData::from_columns(std::move(z), std::move(y), std::move(x),
                                               std::move(stratum), {}, data.roles());
      draws.push_back(fit_sre_adjusted(boot, ROpt{}).tau_c_a);
    } catch (const Error&) {
      ++failures;
    }
  }
  if (draws.size() < static_cast<std::size_t>(resamples) / 2)
    throw Error(ErrorCode::StudyFailure, "more than half of the bootstrap resamples failed");

  Bootstrap out;
  out.resamples = resamples;
  out.failures = failures;
  const double m = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  out.se = std::sqrt(var / (m - 1.0));
  std::sort(draws.begin(), draws.end());
  auto pct = [&](double p) {
    const double idx = p * (m - 1.0);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, draws.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return draws[lo] * (1.0 - frac) + draws[hi] * frac;
  };
  out.ci_lower = pct(alpha / 2.0);
  out.ci_upper = pct(1.0 - alpha / 2.0);
  return out;
}

// ---------- OBS with covariates ----------

AdjustedFit fit_obs_adjusted(const StudyData& data, obs::WeightsSource source) {
  const int n = data.n();
  const int l = data.L();
  const int k = data.K();
  const double dn = static_cast<double>(n);

  AdjustedFit f;
  f.design = Design::OBS;
  f.source = source;
  if (source == obs::WeightsSource::ESTIMATE) {
    f.propensity = obs::fit_propensity(data);
  } else {
    if (!data.has_user_weights())
      throw Error(ErrorCode::InvalidSpec, "user weights requested but none supplied");
    f.user_w = data.user_weights();
  }
  const Vector& w = f.w();
  f.s11 = w.sum() / dn;

  const Matrix xy = k > 0 ? hstack(data.x(), data.y()) : data.y();
  const num::LinearFit inv = num::wls(data.z(), xy, w, true);
  f.beta_x = inv.coef.head(k);
  f.beta_a = inv.coef.tail(l);
  f.residuals = inv.residuals;

  if (k > 0) {
    f.y_check = residualize_weighted(data.y(), data.x(), w);
    f.z_check = residualize_weighted(data.z(), data.x(), w).col(0);
  } else {
    f.y_check = data.y().rowwise() -
                (data.y().transpose() * w / w.sum()).transpose();
    f.z_check = (data.z().array() - w.dot(data.z()) / w.sum()).matrix();
  }
  f.phi_check = f.y_check.transpose() * w.asDiagonal() * f.y_check / dn;
  f.phi_zz_x = (w.array() * f.z_check.array().square()).sum() / dn;
  f.tau_a = f.y_check.transpose() * (w.array() * f.z_check.array()).matrix() /
            (dn * f.phi_zz_x);
  f.tau_c_a = f.beta_a.dot(f.tau_a);

  {
    const Eigen::LDLT<Matrix> ldlt(f.phi_check);
    const Vector rhs = f.phi_zz_x * ldlt.solve(f.tau_a);
    f.identity_rel_err = rel_diff(f.beta_a, rhs);
  }
  {
    const Matrix zx = k > 0 ? hstack(Matrix(data.z()), data.x()) : Matrix(data.z());
    const num::LinearFit step2 = num::wls(data.y() * f.beta_a, zx, w, true);
    const double slope = step2.coef[0];
    const double scale = std::max(std::abs(f.tau_c_a), std::abs(slope));
    f.two_step_rel_err = scale == 0.0 ? 0.0 : std::abs(f.tau_c_a - slope) / scale;
  }
  return f;
}

Matrix psi_terms_obs_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Vector& w = fit.w();

  Matrix psi(n, l);
  for (int i = 0; i < n; ++i)
    psi.row(i) = fit.residuals[i] * w[i] * fit.y_check.row(i);

  if (fit.source == obs::WeightsSource::ESTIMATE) {
    const obs::PropensityFit& pf = *fit.propensity;
    const int p = static_cast<int>(pf.alpha.size());
    Matrix corr = Matrix::Zero(l, p);
    for (int i = 0; i < n; ++i)
      corr += fit.residuals[i] * fit.y_check.row(i).transpose() * pf.grad_w.row(i);
    corr /= static_cast<double>(n);
    const Eigen::LDLT<Matrix> info(pf.info);
    if (info.info() != Eigen::Success)
      throw Error(ErrorCode::NearSingular, "propensity information matrix is singular");
    const Matrix corr_iinv = info.solve(corr.transpose()).transpose();
    psi += pf.score_contribs * corr_iinv.transpose();
  }
  return psi;
}

WaldResult wald_obs_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix psi = psi_terms_obs_adjusted(fit, data);
  const Matrix meat = psi.transpose() * psi / dn;
  const Eigen::LDLT<Matrix> phi(fit.phi_check);
  if (phi.info() != Eigen::Success)
    throw Error(ErrorCode::NearSingular, "phi_yy_x is singular");
  const Matrix vbeta = phi.solve(phi.solve(meat).transpose()).transpose() / dn;
  return detail::wald_from(fit.beta_a, vbeta);
}

double variance_obs_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const int n = data.n();
  const int l = data.L();
  const Vector& w = fit.w();
  const Vector phi_beta = fit.phi_check * fit.beta_a;
  const Matrix psi = psi_terms_obs_adjusted(fit, data);

  Vector corr_scalar = Vector::Zero(n);
  Matrix corr_yy = Matrix::Zero(n, l);
  if (fit.source == obs::WeightsSource::ESTIMATE) {
    const obs::PropensityFit& pf = *fit.propensity;
    const int p = static_cast<int>(pf.alpha.size());
    Matrix cyy = Matrix::Zero(l, p);
    Eigen::RowVectorXd gbar = Eigen::RowVectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      cyy += (fit.y_check.row(i).transpose() * (fit.y_check.row(i) * fit.beta_a)) *
             pf.grad_w.row(i);
      gbar += pf.grad_w.row(i);
    }
    cyy /= static_cast<double>(n);
    gbar /= static_cast<double>(n);
    const Eigen::LDLT<Matrix> info(pf.info);
    const Matrix cyy_iinv = info.solve(cyy.transpose()).transpose();
    const Vector gbar_iinv = info.solve(gbar.transpose());
    corr_yy = pf.score_contribs * cyy_iinv.transpose();
    corr_scalar = pf.score_contribs * gbar_iinv;
  }

  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector yci = fit.y_check.row(i).transpose();
    Vector ri = w[i] * yci * yci.dot(fit.beta_a) - phi_beta;
    ri += corr_yy.row(i).transpose();
    ri -= 0.5 * ((w[i] - fit.s11) + corr_scalar[i]) * phi_beta;
    ri += 2.0 * psi.row(i).transpose();
    const double proj = fit.beta_a.dot(ri);
    acc += proj * proj;
  }
  return 4.0 * acc / static_cast<double>(n);
}

wchi2::WeightedChiSq gamma_obs_adjusted(const AdjustedFit& fit, const StudyData& data) {
  const double dn = static_cast<double>(data.n());
  const Matrix psi = psi_terms_obs_adjusted(fit, data);
  const Matrix meat = psi.transpose() * psi / dn;
  const Matrix w = num::inv_sqrt_psd(fit.phi_check);
  const Matrix gamma = (w * meat * w) / fit.phi_zz_x;
  return detail::make_null_spectrum(num::sym_eigen(gamma).lambdas);
}

ConfInterval confidence_interval_obs_adjusted(const AdjustedFit& fit, const StudyData& data,
                                              const DesignSpec& spec) {
  return detail::dual_regime_interval(
      fit.tau_c_a, data.n(), spec, [&] { return variance_obs_adjusted(fit, data); },
      [&] { return gamma_obs_adjusted(fit, data); },
      [&] { return wald_obs_adjusted(fit, data); });
}

}  // namespace invreg::covadj
