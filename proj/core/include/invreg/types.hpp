#pragma once

#include <Eigen/Dense>
#include <string>

#include "invreg/error.hpp"

namespace invreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Design { CRE, SRE_REGRESSION, SRE_STRATIFICATION, OBS };

enum class CiMethod { AUTO_TWO_STEP, NORMAL, CHI2, UNION, TWO_STEP };

constexpr const char* design_name(Design d) {
  switch (d) {
    case Design::CRE: return "cre";
    case Design::SRE_REGRESSION: return "sre-reg";
    case Design::SRE_STRATIFICATION: return "sre-strat";
    case Design::OBS: return "obs";
  }
  return "?";
}

constexpr const char* ci_method_name(CiMethod m) {
  switch (m) {
    case CiMethod::AUTO_TWO_STEP: return "auto";
    case CiMethod::NORMAL: return "normal";
    case CiMethod::CHI2: return "chi2";
    case CiMethod::UNION: return "union";
    case CiMethod::TWO_STEP: return "two-step";
  }
  return "?";
}

// Analysis choices for one study; mirrors the CLI surface.
struct DesignSpec {
  Design design = Design::CRE;
  bool adjust_covariates = false;
  double alpha = 0.05;
  CiMethod ci_method = CiMethod::AUTO_TWO_STEP;
  double eta = 0.0;  // 0 means "use alpha/2" for the two-step pre-test

  double effective_eta() const { return eta > 0.0 ? eta : alpha / 2.0; }

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw Error(ErrorCode::InvalidSpec, "alpha must lie in (0,1)");
    if (eta < 0.0 || eta > alpha)
      throw Error(ErrorCode::InvalidSpec, "eta must lie in (0, alpha]");
  }
};

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

struct ConfInterval {
  double lower = 0.0;
  double upper = 0.0;
  CiMethod method = CiMethod::NORMAL;
  double level = 0.95;
  std::string regime_note;
};

}  // namespace invreg
