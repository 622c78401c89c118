#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "invreg/numkernel.hpp"
#include "invreg/prob.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::detail {

inline constexpr double kEigenClampFactor = 1e-10;

// Finite-sample Gamma-hat matrices can carry tiny negative eigenvalues from
// roundoff; clamp those to zero, reject anything genuinely negative.
inline wchi2::WeightedChiSq make_null_spectrum(const Vector& lambdas, bool* clamped = nullptr) {
  const double max_l = lambdas.maxCoeff();
  if (!(max_l > 0.0))
    throw Error(ErrorCode::NegativeEigenvalue, "null spectrum has no positive eigenvalue");
  Vector out = lambdas;
  bool did_clamp = false;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) {
      if (out[i] < -kEigenClampFactor * max_l)
        throw Error(ErrorCode::NegativeEigenvalue,
                    "null spectrum eigenvalue " + std::to_string(out[i]) +
                        " is negative beyond roundoff");
      out[i] = 0.0;
      did_clamp = true;
    }
  }
  if (clamped) *clamped = did_clamp;
  return wchi2::WeightedChiSq(std::move(out));
}

// Dual-regime confidence interval shared by all designs. The callbacks are
// evaluated lazily so each method only computes what it needs.
inline ConfInterval dual_regime_interval(
    double tau_c, int n, const DesignSpec& spec,
    const std::function<double()>& variance_normal,
    const std::function<wchi2::WeightedChiSq()>& gamma_null,
    const std::function<WaldResult()>& wald) {
  spec.validate();
  const double alpha = spec.alpha;
  const double dn = static_cast<double>(n);

  auto normal_at = [&](double a) {
    const double v = variance_normal();
    const double half = prob::normal_quantile(1.0 - a / 2.0) * std::sqrt(v / dn);
    return std::pair<double, double>(tau_c - half, tau_c + half);
  };
  auto chi2_at = [&](double a) {
    const wchi2::WeightedChiSq dist = gamma_null();
    const double q_hi = dist.quantile(1.0 - a / 2.0);
    const double q_lo = dist.quantile(a / 2.0);
    return std::pair<double, double>(tau_c - q_hi / dn, tau_c - q_lo / dn);
  };

  ConfInterval ci;
  ci.level = 1.0 - alpha;
  CiMethod method = spec.ci_method;
  if (method == CiMethod::AUTO_TWO_STEP) method = CiMethod::TWO_STEP;

  switch (method) {
    case CiMethod::NORMAL: {
      auto [lo, hi] = normal_at(alpha);
      ci.lower = lo;
      ci.upper = hi;
      ci.method = CiMethod::NORMAL;
      ci.regime_note = "normal regime (tau != 0 asymptotics)";
      break;
    }
    case CiMethod::CHI2: {
      auto [lo, hi] = chi2_at(alpha);
      ci.lower = lo;
      ci.upper = hi;
      ci.method = CiMethod::CHI2;
      ci.regime_note = "weighted chi-squared regime (tau = 0 asymptotics)";
      break;
    }
    case CiMethod::UNION: {
      auto [nlo, nhi] = normal_at(alpha);
      auto [clo, chi] = chi2_at(alpha);
      ci.lower = std::min(nlo, clo);
      ci.upper = std::max(nhi, chi);
      ci.method = CiMethod::UNION;
      ci.regime_note = "union of normal and weighted chi-squared intervals";
      break;
    }
    default: {  // TWO_STEP
      const double eta = spec.effective_eta();
      const WaldResult w = wald();
      const double inner = alpha - eta;
      if (w.p_value < eta) {
        auto [lo, hi] = normal_at(inner);
        ci.lower = lo;
        ci.upper = hi;
        ci.regime_note = "two-step: Wald pre-test rejected tau=0 at eta=" +
                         std::to_string(eta) + "; normal interval at level " +
                         std::to_string(1.0 - inner);
      } else {
        auto [lo, hi] = chi2_at(inner);
        ci.lower = lo;
        ci.upper = hi;
        ci.regime_note = "two-step: Wald pre-test kept tau=0 at eta=" + std::to_string(eta) +
                         "; weighted chi-squared interval at level " +
                         std::to_string(1.0 - inner);
      }
      ci.method = CiMethod::TWO_STEP;
      break;
    }
  }
  return ci;
}

// HC0 sandwich block for partialled-out regressors: with residualized
// regressors m_i and residuals e_i, cov-hat of the coefficient block is
// n^-1 * A^-1 (n^-1 sum e_i^2 m_i m_i') A^-1 where A = n^-1 sum m_i m_i'.
// Exactly equals the full-regression Huber-White block by Frisch-Waugh.
inline Matrix hc0_partialled(const Matrix& partialled, const Vector& residuals) {
  const double dn = static_cast<double>(partialled.rows());
  const Matrix a = partialled.transpose() * partialled / dn;
  const Matrix meat =
      partialled.transpose() * residuals.array().square().matrix().asDiagonal() * partialled /
      dn;
  const Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorCode::NearSingular, "sandwich bread matrix is singular");
  const Matrix ainv_meat = ldlt.solve(meat);
  return ldlt.solve(ainv_meat.transpose()).transpose() / dn;
}

inline WaldResult wald_from(const Vector& beta, const Matrix& vbeta) {
  const num::EigenSpectrum spec = num::sym_eigen(vbeta);
  const double max_l = spec.lambdas.cwiseAbs().maxCoeff();
  if (!(spec.lambdas.minCoeff() > 1e-14 * max_l))
    throw Error(ErrorCode::NearSingular, "Wald covariance matrix is numerically singular");
  const Eigen::LDLT<Matrix> ldlt(vbeta);
  WaldResult w;
  w.statistic = beta.dot(ldlt.solve(beta));
  w.df = static_cast<int>(beta.size());
  w.p_value = prob::chi2_sf(w.statistic, w.df);
  return w;
}

}  // namespace invreg::detail
