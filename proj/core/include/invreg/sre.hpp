#pragma once

#include <vector>

#include "invreg/cre.hpp"
#include "invreg/dataset.hpp"
#include "invreg/numkernel.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::sre {

// Regression strategy: inverse OLS of Z on (G, Y), pooled across strata.
struct StratifiedFit {
  Vector beta_sr;   // coefficient of Y
  Vector tau_sr;    // coefficient of Z from Y ~ (G, Z), per outcome
  double tau_c_sr;  // beta' tau

  // pooled within-stratum moments, 1/n convention
  double a_zz;   // n^-1 z'(I-H_g)z = sum_s pi_s zbar_s (1-zbar_s)
  Matrix a_yy;   // n^-1 y'(I-H_g)y
  Vector a_yz;   // n^-1 y'(I-H_g)z

  Vector residuals;  // zeta_i from the full inverse regression
  Matrix y_tilde;    // within-stratum centered outcomes
  Vector z_tilde;    // within-stratum centered treatment

  std::vector<int> stratum_sizes;
  std::vector<double> zbar_by_stratum;
  std::vector<Matrix> s_yy_by_stratum;

  double prop2_rel_err = 0.0;
  double a_zz_identity_err = 0.0;  // |a_zz - sum pi_s zbar(1-zbar)|
};

StratifiedFit fit_regression(const StudyData& data);

// Stratification strategy: independent CRE composites per stratum, aggregated
// with the stratum proportions n_s/n.
struct StratificationFit {
  std::vector<cre::CompositeFit> by_stratum;
  std::vector<std::string> labels;
  std::vector<int> sizes;
  Vector tau_aggregate;   // n_s/n weighted difference in means
  double tau_c_aggregate;
};

StratificationFit fit_stratification(const StudyData& data);

WaldResult wald_test_sr(const StratifiedFit& fit, const StudyData& data);

Matrix influence_terms_sr(const StratifiedFit& fit, const StudyData& data);

double variance_normal_sr(const StratifiedFit& fit, const StudyData& data);

wchi2::WeightedChiSq gamma_null_sr(const StratifiedFit& fit, const StudyData& data);

ConfInterval confidence_interval_sr(const StratifiedFit& fit, const StudyData& data,
                                    const DesignSpec& spec);

}  // namespace invreg::sre
