#pragma once

#include "invreg/types.hpp"

namespace invreg::num {

struct LogitMle {
  Vector coef;          // full coefficient vector, design-column order
  Vector fitted;        // pi_i in (0,1)
  Vector score;         // n^-1 sum (z_i - pi_i) d_i  at the optimum
  Matrix neg_hessian;   // n^-1 sum pi(1-pi) d_i d_i'  at the optimum
  bool converged = false;
  int iterations = 0;
};

// Newton maximization of the binary logistic log-likelihood of response on the
// given design matrix (caller appends intercept/indicator columns). Step
// halving engages only when a step lowers the log-likelihood. Errors:
// RankDeficient (design), Separation (|coef| beyond bound or divergence),
// NoConvergence (iteration budget).
LogitMle logistic_mle(const Vector& response, const Matrix& design);

inline constexpr double kLogitCoefBound = 30.0;
inline constexpr int kLogitMaxIter = 100;
inline constexpr double kLogitScoreTol = 1e-10;
inline constexpr double kLogitStepTol = 1e-12;

}  // namespace invreg::num
