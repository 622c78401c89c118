#pragma once

#include "invreg/dataset.hpp"
#include "invreg/numkernel.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::cre {

// Inverse OLS of Z on (1, Y) in a completely randomized experiment.
struct CompositeFit {
  Vector beta;       // inverse-regression weights for Y
  double beta0;      // intercept
  Vector tau;        // difference in group means, per outcome
  double tau_c;      // beta' tau
  Matrix sigma_hat;  // (1-zbar)^-1 cov{Y(1)} + zbar^-1 cov{Y(0)}
  Vector residuals;  // z_i - beta0 - beta' y_i
  num::MomentSet moments;

  // equivalence diagnostics (relative errors; exact identities, not asymptotics)
  double prop1_form1_rel_err = 0.0;  // beta vs zbar(1-zbar) S_yy^-1 tau
  double prop1_form2_rel_err = 0.0;  // beta vs Sigma^-1 tau / (1 + tau' Sigma^-1 tau)
  bool sigma_invertible = true;
  double two_step_rel_err = 0.0;  // beta' tau vs slope of beta'y on (1,z)
};

CompositeFit fit(const StudyData& data);

WaldResult wald_test(const CompositeFit& fit, const StudyData& data);

// per-unit influence terms r_i of the tau != 0 normal limit
Matrix influence_terms(const CompositeFit& fit, const StudyData& data);

double variance_normal(const CompositeFit& fit, const StudyData& data);

wchi2::WeightedChiSq gamma_null(const CompositeFit& fit, const StudyData& data);

ConfInterval confidence_interval(const CompositeFit& fit, const StudyData& data,
                                 const DesignSpec& spec);

}  // namespace invreg::cre
