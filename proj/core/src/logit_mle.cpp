#include "invreg/logit_mle.hpp"

#include <cmath>

#include "invreg/error.hpp"
#include "invreg/numkernel.hpp"

namespace invreg::num {

namespace {

double log_likelihood(const Vector& z, const Vector& eta) {
  // sum z*eta - log(1+exp(eta)), stable for large |eta|
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double e = eta[i];
    const double log1pexp = e > 30.0 ? e : std::log1p(std::exp(e));
    ll += z[i] * e - log1pexp;
  }
  return ll / static_cast<double>(z.size());
}

Vector sigmoid(const Vector& eta) {
  return (1.0 + (-eta.array()).exp()).inverse().matrix();
}

}  // namespace

LogitMle logistic_mle(const Vector& response, const Matrix& design) {
  const Eigen::Index n = response.size();
  const Eigen::Index p = design.cols();
  if (design.rows() != n)
    throw Error(ErrorCode::InvalidSpec, "logistic_mle: dimension mismatch");

  {
    // fail fast on a collinear design instead of wandering off
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    const auto& r = qr.matrixR();
    double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < p; ++k) {
      rmax = std::max(rmax, std::abs(r(k, k)));
      rmin = std::min(rmin, std::abs(r(k, k)));
    }
    if (!(rmin > kRankTolFactor * rmax))
      throw Error(ErrorCode::RankDeficient, "logistic_mle: design matrix is rank deficient");
  }

  LogitMle out;
  out.coef = Vector::Zero(p);
  Vector eta = Vector::Zero(n);
  double ll = log_likelihood(response, eta);

  for (int iter = 1; iter <= kLogitMaxIter; ++iter) {
    out.iterations = iter;
    const Vector pi = sigmoid(eta);
    const Vector resid = response - pi;
    const Vector score = design.transpose() * resid / static_cast<double>(n);
    const Vector wdiag = pi.array() * (1.0 - pi.array());
    const Matrix info = design.transpose() * wdiag.asDiagonal() * design /
                        static_cast<double>(n);

    if (score.lpNorm<Eigen::Infinity>() <= kLogitScoreTol) {
      out.fitted = pi;
      out.score = score;
      out.neg_hessian = info;
      out.converged = true;
      if (out.coef.lpNorm<Eigen::Infinity>() > kLogitCoefBound)
        throw Error(ErrorCode::Separation,
                    "logistic_mle: coefficient beyond separation bound at optimum");
      return out;
    }

    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw Error(ErrorCode::NearSingular, "logistic_mle: singular information matrix");
    Vector step = ldlt.solve(score);
    if (!step.allFinite())
      throw Error(ErrorCode::NearSingular, "logistic_mle: non-finite Newton step");

    double scale = 1.0;
    Vector cand;
    double cand_ll = 0.0;
    for (int h = 0; h < 40; ++h) {
      cand = out.coef + scale * step;
      cand_ll = log_likelihood(response, design * cand);
      if (cand_ll >= ll - 1e-14) break;
      scale *= 0.5;
    }
    const double step_norm = (scale * step).norm();
    out.coef = cand;
    eta = design * out.coef;
    ll = cand_ll;

    if (out.coef.lpNorm<Eigen::Infinity>() > kLogitCoefBound)
      throw Error(ErrorCode::Separation,
                  "logistic_mle: coefficients diverging (likely separation)");
    if (step_norm <= kLogitStepTol) {
      const Vector pi2 = sigmoid(eta);
      out.fitted = pi2;
      out.score = design.transpose() * (response - pi2) / static_cast<double>(n);
      const Vector w2 = pi2.array() * (1.0 - pi2.array());
      out.neg_hessian = design.transpose() * w2.asDiagonal() * design /
                        static_cast<double>(n);
      out.converged = true;
      return out;
    }
  }
  throw Error(ErrorCode::NoConvergence, "logistic_mle: Newton iteration budget exhausted");
}

}  // namespace invreg::num
