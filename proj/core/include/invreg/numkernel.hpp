#pragma once

#include <vector>

#include "invreg/types.hpp"

namespace invreg::num {

inline constexpr double kRankTolFactor = 1e-10;   // rank_tol = factor * max |R_kk|
inline constexpr double kPsdFloorFactor = 1e-12;  // psd_floor = factor * ||A||

struct LinearFit {
  Vector coef;       // slope coefficients, original column order
  double intercept;  // 0 when fitted without intercept
  Vector residuals;  // response - fitted
};

// Least squares through column-pivoted Householder QR. RankDeficient when the
// smallest retained |R_kk| falls below kRankTolFactor times the largest.
LinearFit ols(const Vector& response, const Matrix& predictors, bool intercept);

LinearFit wls(const Vector& response, const Matrix& predictors, const Vector& weights,
              bool intercept);

// Residualize every column on stratum indicators (within-stratum centering).
// Labels must be dense 1..S.
Matrix partial_out_strata(const Matrix& columns, const std::vector<int>& stratum, int n_strata);

struct EigenSpectrum {
  Vector lambdas;  // sorted descending
  Matrix basis;    // columns are the matching eigenvectors, A = Q diag(l) Q^T
};

EigenSpectrum sym_eigen(const Matrix& a);

// Symmetric M with M*A*M = I on the range of A; rejects eigenvalues below the
// psd floor and any eigenvalue below -1e-10*||A||.
Matrix inv_sqrt_psd(const Matrix& a);

struct MomentSet {
  Matrix s_yy;    // L x L, 1/n convention
  Vector s_yz;    // L
  double s_zz;    // zbar(1-zbar)
  Vector y_mean;  // L
  double z_mean;
};

MomentSet moments(const Vector& z, const Matrix& y);

struct WeightedMoments {
  double s11;     // n^-1 sum w
  Vector sy1;     // n^-1 sum w*y
  double sz1;     // n^-1 sum w*z
  Matrix syy;     // n^-1 sum w*y*y'
  Vector syz;     // n^-1 sum w*z*y
  double szz;     // n^-1 sum w*z^2
  Matrix phi_yy;  // syy - sy1 sy1'/s11
  Vector phi_yz;
  double phi_zz;
  Vector y_wmean;  // sy1/s11
};

WeightedMoments weighted_moments(const Vector& z, const Matrix& y, const Vector& w);

}  // namespace invreg::num
