#pragma once

#include <cstdint>

#include "invreg/types.hpp"

namespace invreg::wchi2 {

// Law of sum_l lambda_l * chisq_l(1) with independent one-df components.
// CDF by Imhof's characteristic-function inversion, deterministic accuracy.
class WeightedChiSq {
 public:
  explicit WeightedChiSq(Vector lambdas);

  const Vector& lambdas() const { return lambdas_; }

  // absolute accuracy 1e-6 or IntegrationFailure
  double cdf(double t) const;

  // bracketing on [0, sum(lambda)*q_big] grown geometrically, then bisection
  // to 1e-9 relative width
  double quantile(double p) const;

  Vector sample(int count, std::uint64_t seed) const;

  double mean() const { return lambdas_.sum(); }

 private:
  Vector lambdas_;         // validated nonnegative, at least one positive
  Vector active_;          // lambdas above the relative drop threshold
};

}  // namespace invreg::wchi2
