#pragma once

#include "invreg/dataset.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::invlogit {

// Inverse logistic regression of Z on (1, Y) or on (G, Y). The composite
// effect gamma' tau is a test statistic for tau = 0 only; no non-null
// asymptotics are available, so no confidence interval is offered.
struct LogitFit {
  bool stratified = false;
  Vector gamma_g;  // intercept (length 1) or per-stratum intercepts (length S)
  Vector gamma;    // coefficients of Y
  Vector fitted;   // pi_i
  Vector score;    // mean score at the optimum
  Matrix hessian;  // n^-1 sum pi(1-pi) d d' (negated Hessian of mean loglik)
  Vector tau;      // matching marginal effects (diff-in-means or partialled)
  double tau_c_logit = 0.0;
  bool converged = false;
  int iterations = 0;
};

LogitFit fit_logit(const StudyData& data, bool stratified);

// valid under H0: tau = 0 only
WaldResult wald_logit(const LogitFit& fit, const StudyData& data);

wchi2::WeightedChiSq null_spectrum_logit(const LogitFit& fit, const StudyData& data);

}  // namespace invreg::invlogit
