#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invreg/dataset.hpp"
#include "invreg/types.hpp"

namespace invreg::mc {

// Data-generating process: Y(0) = loading*X + eps, Y(1) = Y(0) + tau,
// treatment assigned per design.
struct DgpSpec {
  Design design = Design::CRE;
  int n = 100;
  int L = 1;
  int K = 0;
  int S = 1;
  Vector tau;              // L
  Matrix outcome_cov;      // L x L PSD
  Vector stratum_probs;    // S, used for SRE
  Vector treatment_probs;  // scalar or per-stratum
  Vector propensity_alpha; // K+1, used for OBS (intercept first)
  Matrix covariate_cov;    // K x K PSD
  Matrix x_loading;        // L x K effect of X on Y(0)
  std::uint64_t seed = 1;

  void validate() const;
  double treatment_prob(int stratum_1based) const;
};

StudyData generate(const DgpSpec& spec, std::uint64_t replicate_index);

// population composite effect targeted by each analysis (tau_[s] constant
// across strata in this DGP family)
double population_tau_c(const DgpSpec& spec, Design analysis);

enum class Method {
  WaldCre,
  WaldSre,
  WaldObs,
  WaldCreAdjusted,
  WaldObsAdjusted,
  WaldLogitCre,
  WaldLogitSre,
  CiCre,
  CiSre,
  CiObs,
  NullDistCre,
  NullDistSre,
  NullDistObs,
  NullDistLogitCre,
  NullDistLogitSre,
  EstimateCre,
  EstimateSre,
  EstimateObs,
};

Method method_from_name(const std::string& name);
const char* method_name(Method m);

struct StudyConfig {
  Method method = Method::WaldCre;
  CiMethod ci_method = CiMethod::CHI2;
  double alpha = 0.05;
  double eta = 0.0;   // 0 -> alpha/2 in two-step
  int reps = 1000;
  int workers = 1;
  double max_failure_rate = 0.01;
};

struct SimSummary {
  std::string method;
  int replications = 0;
  int completed = 0;
  int failures = 0;
  bool has_rejection = false;
  double rejection_rate = 0.0;
  double rejection_se = 0.0;
  bool has_coverage = false;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double true_value = 0.0;
  double est_mean = 0.0;
  double est_var = 0.0;
  bool has_ks = false;
  double ks_statistic = 0.0;
  Vector reference_lambdas;  // mean fitted spectrum for the KS reference
};

SimSummary run_study(const DgpSpec& spec, const StudyConfig& config);

}  // namespace invreg::mc
