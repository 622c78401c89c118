#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "invreg/dataset.hpp"
#include "invreg/numkernel.hpp"
#include "invreg/obs.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::covadj {

inline constexpr double kZeroVarXTol = 1e-14;

// sentinel for "estimate the optimal r from the data"
struct ROpt {};

struct AdjustedFit {
  Design design = Design::CRE;
  Vector beta_a;   // coefficient of Y in the adjusted inverse regression
  Vector beta_x;   // coefficient of X (empty when K = 0)
  Vector tau_a;    // adjusted marginal effects of Z on Y
  double tau_c_a = 0.0;
  Vector residuals;

  // SRE three-step pieces
  double tau_c_y = 0.0;
  double tau_c_x = 0.0;
  double r_used = 0.0;
  double r_opt_hat = std::numeric_limits<double>::quiet_NaN();

  double identity_rel_err = 0.0;  // adjusted equivalence identity
  double two_step_rel_err = 0.0;  // CRE/OBS two-step route check

  // ---- cached working quantities (variant-specific) ----
  // CRE: residualized-on-(1,X) columns
  Matrix y_check;    // also OBS: weighted projection residuals of Y on (1,X)
  Vector z_check;
  Matrix phi_check;  // y_check' y_check / n (weighted for OBS)
  double s_zz = 0.0;         // zbar(1-zbar) (CRE)
  Vector y_mean, x_mean;     // grand means (CRE)

  // SRE: stratum-partialled stacked columns u = (kept X, Y); covariates that
  // the stratum projection annihilates are dropped with zero coefficients
  std::vector<int> kept_x;
  Matrix u_tilde;
  Vector z_tilde;
  Matrix a_uu;  // u'(I-Hg)u / n
  double a_zz = 0.0;
  Vector tau_sru;  // (K+L) effects of z on u
  std::vector<int> stratum_sizes;
  std::vector<double> zbar_by_stratum;
  std::vector<Matrix> s_uu_by_stratum;

  // OBS: weighting context
  obs::WeightsSource source = obs::WeightsSource::ESTIMATE;
  std::optional<obs::PropensityFit> propensity;
  Vector user_w;
  double phi_zz_x = 0.0;
  double s11 = 0.0;  // n^-1 sum w

  const Vector& w() const {
    return source == obs::WeightsSource::ESTIMATE ? propensity->weights : user_w;
  }
  Vector beta_u() const {  // stacked (beta_x, beta_a)
    Vector b(beta_x.size() + beta_a.size());
    b << beta_x, beta_a;
    return b;
  }
};

// ---- completely randomized experiments with covariates ----
AdjustedFit fit_cre_adjusted(const StudyData& data);
WaldResult wald_cre_adjusted(const AdjustedFit& fit, const StudyData& data);
double variance_cre_adjusted(const AdjustedFit& fit, const StudyData& data);
wchi2::WeightedChiSq gamma_cre_adjusted(const AdjustedFit& fit, const StudyData& data);
ConfInterval confidence_interval_cre_adjusted(const AdjustedFit& fit, const StudyData& data,
                                              const DesignSpec& spec);

// ---- stratified randomized experiments with covariates (three-step) ----
AdjustedFit fit_sre_adjusted(const StudyData& data, double r);
AdjustedFit fit_sre_adjusted(const StudyData& data, ROpt);
// statistic spans the full (X, Y) coefficient block; df = L per the stated
// asymptotics
WaldResult wald_sre_adjusted(const AdjustedFit& fit, const StudyData& data);
double variance_sre_adjusted(const AdjustedFit& fit, const StudyData& data, double r);
// real D^(1/2) exists only for r <= 0; r > 0 goes through the bootstrap
wchi2::WeightedChiSq gamma_sre_adjusted(const AdjustedFit& fit, const StudyData& data,
                                        double r);

struct Bootstrap {
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  int resamples = 0;
  int failures = 0;
};

// nonparametric bootstrap of tau_c(r_opt-hat), resampling within strata
Bootstrap bootstrap_sre_ropt(const StudyData& data, int resamples, std::uint64_t seed,
                             double alpha);

// ---- observational studies with covariates ----
AdjustedFit fit_obs_adjusted(const StudyData& data, obs::WeightsSource source);
Matrix psi_terms_obs_adjusted(const AdjustedFit& fit, const StudyData& data);
WaldResult wald_obs_adjusted(const AdjustedFit& fit, const StudyData& data);
double variance_obs_adjusted(const AdjustedFit& fit, const StudyData& data);
wchi2::WeightedChiSq gamma_obs_adjusted(const AdjustedFit& fit, const StudyData& data);
ConfInterval confidence_interval_obs_adjusted(const AdjustedFit& fit, const StudyData& data,
                                              const DesignSpec& spec);

}  // namespace invreg::covadj
