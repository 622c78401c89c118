#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invreg/dataset.hpp"
#include "invreg/numkernel.hpp"
#include "invreg/types.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::obs {

enum class WeightsSource { ESTIMATE, USER };

inline constexpr double kExtremeScore = 1e-4;  // overlap warning threshold

// Logistic propensity model on (1, X) solved by Newton on the score equation.
struct PropensityFit {
  Vector alpha;          // K+1 coefficients, intercept first
  Vector scores;         // e(x_i; alpha-hat)
  Vector weights;        // z/e + (1-z)/(1-e)
  Matrix score_contribs; // n x (K+1), rows S(z_i, x_i; alpha-hat)
  Matrix info;           // (K+1) x (K+1), I-hat(alpha-hat)
  Matrix grad_w;         // n x (K+1), rows grad_alpha w_i
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;  // extreme fitted scores
};

PropensityFit fit_propensity(const StudyData& data);

struct ObsFit {
  Vector beta_os;  // coefficient of Y in weighted inverse regression
  double beta0_os;
  Vector tau_os;     // Hajek-style WLS effects
  double tau_c_os;   // beta' tau
  Matrix sigma_os_hat;
  Vector residuals;  // varsigma_i
  num::WeightedMoments wm;
  WeightsSource source = WeightsSource::ESTIMATE;
  std::optional<PropensityFit> propensity;  // present when source == ESTIMATE

  double prop3_form1_rel_err = 0.0;
  double prop3_form2_rel_err = 0.0;
  bool sigma_invertible = true;
  double two_step_rel_err = 0.0;

  const Vector& w() const {
    return source == WeightsSource::ESTIMATE ? propensity->weights : user_w;
  }
  Vector user_w;  // populated when source == USER
};

ObsFit fit(const StudyData& data, WeightsSource source);

// psi-hat rows of Lemma-style influence for beta_os; the second (propensity
// correction) block is present only for estimated weights.
Matrix psi_terms(const ObsFit& fit, const StudyData& data);

WaldResult wald_test_os(const ObsFit& fit, const StudyData& data);

Matrix influence_terms_os(const ObsFit& fit, const StudyData& data);

double variance_normal_os(const ObsFit& fit, const StudyData& data);

wchi2::WeightedChiSq gamma_null_os(const ObsFit& fit, const StudyData& data);

ConfInterval confidence_interval_os(const ObsFit& fit, const StudyData& data,
                                    const DesignSpec& spec);

}  // namespace invreg::obs
