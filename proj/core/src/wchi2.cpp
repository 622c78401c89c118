#include "invreg/wchi2.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "invreg/error.hpp"
#include "invreg/prob.hpp"
#include "invreg/rng.hpp"

namespace invreg::wchi2 {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kDropFactor = 1e-12;  // relative eigenvalue drop threshold
constexpr double kTruncTol = 3e-9;     // truncation budget for (1/pi) * tail
constexpr double kQuadTol = 3e-9;      // Simpson budget for (1/pi) * [0,U]
constexpr double kFailTol = 1e-6;      // spec accuracy contract
constexpr long kEvalBudget = 4000000;  // hard cap per cdf call

// Imhof integrand state for one (lambdas, t) pair.
struct Imhof {
  const Vector& lam;
  double t;

  double theta(double u) const {
    double s = 0.0;
    for (Eigen::Index l = 0; l < lam.size(); ++l) s += std::atan(lam[l] * u);
    return 0.5 * s - 0.5 * t * u;
  }
  // d theta / du = a(u) - t/2
  double a(double u) const {
    double s = 0.0;
    for (Eigen::Index l = 0; l < lam.size(); ++l) {
      const double lu = lam[l] * u;
      s += lam[l] / (1.0 + lu * lu);
    }
    return 0.5 * s;
  }
  double log_rho(double u) const {
    double s = 0.0;
    for (Eigen::Index l = 0; l < lam.size(); ++l) {
      const double lu = lam[l] * u;
      s += std::log1p(lu * lu);
    }
    return 0.25 * s;
  }
  // g = 1/(u rho(u)); g'/g = -1/u - q(u)
  double q(double u) const {
    double s = 0.0;
    for (Eigen::Index l = 0; l < lam.size(); ++l) {
      const double l2u = lam[l] * lam[l] * u;
      s += l2u / (1.0 + l2u * u);
    }
    return 0.5 * s;
  }
  double theta2(double u) const {  // second derivative of theta
    double s = 0.0;
    for (Eigen::Index l = 0; l < lam.size(); ++l) {
      const double lu = lam[l] * u;
      const double d = 1.0 + lu * lu;
      s += lam[l] * lam[l] * lam[l] * u / (d * d);
    }
    return -s;
  }

  double integrand(double u) const {
    if (u <= 0.0) return 0.5 * (lam.sum() - t);  // limit as u -> 0
    return std::sin(theta(u)) * std::exp(-log_rho(u)) / u;
  }
};

struct TailCorrection {
  bool valid = false;
  double value = 0.0;  // approximates integral over [U, inf)
  double error = 0.0;
};

// Two integration-by-parts terms: int_U^inf g sin(theta) du
//   = cos(theta) g/theta' |_U - sin(theta) (g/theta')'/theta' |_U - R2,
// with |R2| bounded by the magnitude of the second term under monotone decay.
TailCorrection tail_ibp(const Imhof& f, double u) {
  TailCorrection tc;
  if (f.t <= 0.0) return tc;
  const double au = f.a(u);
  if (!(au <= 0.25 * f.t)) return tc;  // need |theta'| >= t/4 beyond u
  const double g = std::exp(-f.log_rho(u)) / u;
  const double dg = g * (-1.0 / u - f.q(u));
  const double th1 = au - 0.5 * f.t;
  const double th2 = f.theta2(u);
  const double h1 = g / th1;
  const double dh1 = dg / th1 - g * th2 / (th1 * th1);
  const double h2 = dh1 / th1;
  tc.valid = true;
  tc.value = std::cos(f.theta(u)) * h1 - std::sin(f.theta(u)) * h2;
  tc.error = 2.0 * std::abs(h2);
  return tc;
}

// envelope bound on int_U^inf |g| du (valid for any t)
double tail_envelope(const Vector& lam, double u) {
  const double l = static_cast<double>(lam.size());
  double log_prod = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) log_prod += std::log(lam[i]);
  const double log_bound = std::log(2.0 / l) - 0.5 * l * std::log(u) - 0.5 * log_prod;
  return std::exp(log_bound);
}

struct Quad {
  double value = 0.0;
  double error = 0.0;
  long evals = 0;
};

void simpson_rec(const Imhof& f, double a, double b, double fa, double fm, double fb,
                 double whole, double tol, int depth, Quad& acc) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f.integrand(lm), frm = f.integrand(rm);
  acc.evals += 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol || acc.evals > kEvalBudget) {
    acc.value += left + right + delta / 15.0;
    acc.error += std::abs(delta) / 15.0;
    return;
  }
  simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc);
  simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc);
}

void simpson_segment(const Imhof& f, double a, double b, double tol, Quad& acc) {
  const double fa = f.integrand(a);
  const double fm = f.integrand(0.5 * (a + b));
  const double fb = f.integrand(b);
  acc.evals += 3;
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  simpson_rec(f, a, b, fa, fm, fb, whole, tol, 24, acc);
}

}  // namespace

WeightedChiSq::WeightedChiSq(Vector lambdas) : lambdas_(std::move(lambdas)) {
  if (lambdas_.size() == 0)
    throw Error(ErrorCode::InvalidSpec, "WeightedChiSq: empty spectrum");
  double max_l = 0.0;
  for (Eigen::Index i = 0; i < lambdas_.size(); ++i) {
    if (!(lambdas_[i] >= 0.0))
      throw Error(ErrorCode::InvalidSpec,
                  "WeightedChiSq: negative eigenvalue " + std::to_string(lambdas_[i]));
    max_l = std::max(max_l, lambdas_[i]);
  }
  if (max_l <= 0.0)
    throw Error(ErrorCode::InvalidSpec, "WeightedChiSq: all eigenvalues are zero");
  std::vector<double> keep;
  keep.reserve(lambdas_.size());
  for (Eigen::Index i = 0; i < lambdas_.size(); ++i)
    if (lambdas_[i] >= kDropFactor * max_l) keep.push_back(lambdas_[i]);
  active_ = Eigen::Map<Vector>(keep.data(), static_cast<Eigen::Index>(keep.size()));
}

double WeightedChiSq::cdf(double t) const {
  if (!std::isfinite(t))
    throw Error(ErrorCode::InvalidSpec, "WeightedChiSq::cdf: t must be finite");
  if (t <= 0.0) return 0.0;

  const Imhof f{active_, t};
  const double lam_max = active_.maxCoeff();

  // pick U: smallest power-of-two multiple of the base scale whose tail
  // bound (envelope or IBP-corrected) is within budget
  double u_end = 4.0 / lam_max;
  TailCorrection tail;
  bool bounded = false;
  for (int iter = 0; iter < 80; ++iter) {
    const double env = tail_envelope(active_, u_end);
    tail = tail_ibp(f, u_end);
    if (env <= kTruncTol * kPi) {
      tail.valid = false;  // plain truncation is already fine
      bounded = true;
      break;
    }
    if (tail.valid && tail.error <= kTruncTol * kPi) {
      bounded = true;
      break;
    }
    u_end *= 2.0;
  }
  if (!bounded)
    throw Error(ErrorCode::IntegrationFailure,
                "Imhof truncation bound not reachable (t=" + std::to_string(t) + ")");

  // segment [0,U]: quarter-period phase steps capped by the envelope scale
  std::vector<double> knots;
  knots.push_back(0.0);
  const double scale0 = 1.0 / lam_max;
  double u = 0.0;
  const double min_step = u_end / 250000.0;
  while (u < u_end) {
    const double rate = std::max(std::abs(f.a(u) - 0.5 * t), 0.45 * t);
    double step = 0.5 * kPi / rate;
    step = std::min(step, 0.75 * std::max(u, scale0));
    step = std::max(step, min_step);
    u = std::min(u + step, u_end);
    knots.push_back(u);
  }

  Quad acc;
  const double seg_tol = kQuadTol * kPi / static_cast<double>(knots.size() - 1);
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    simpson_segment(f, knots[k], knots[k + 1], seg_tol, acc);
    if (acc.evals > kEvalBudget)
      throw Error(ErrorCode::IntegrationFailure, "Imhof quadrature exceeded eval budget");
  }

  double integral = acc.value;
  double err = acc.error;
  if (tail.valid) {
    integral += tail.value;
    err += tail.error;
  } else {
    err += tail_envelope(active_, u_end);
  }
  if (err / kPi > kFailTol) {
    std::ostringstream msg;
    msg << "Imhof error estimate " << err / kPi << " exceeds 1e-6 at t=" << t;
    throw Error(ErrorCode::IntegrationFailure, msg.str());
  }

  const double p = 0.5 - integral / kPi;
  return std::clamp(p, 0.0, 1.0);
}

double WeightedChiSq::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::InvalidSpec, "WeightedChiSq::quantile: p must lie in (0,1)");

  // Satterthwaite-style start: T ~ c * chisq(nu) by moment matching
  const double sum = active_.sum();
  const double sum2 = active_.squaredNorm();
  const double c = sum2 / sum;
  const double nu = sum * sum / sum2;
  double hi = 1.5 * c * prob::chi2_quantile(p, std::max(1, static_cast<int>(std::lround(nu))));
  hi = std::max(hi, 1e-8 * sum);
  int guard = 0;
  while (cdf(hi) < p) {
    hi *= 2.0;
    if (++guard > 200)
      throw Error(ErrorCode::IntegrationFailure, "quantile bracket expansion failed");
  }
  double lo = 0.0;
  while (hi - lo > 1e-9 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Vector WeightedChiSq::sample(int count, std::uint64_t seed) const {
  if (count < 1)
    throw Error(ErrorCode::InvalidSpec, "WeightedChiSq::sample: count must be >= 1");
  CounterRng rng(seed, 0);
  Vector out(count);
  const Eigen::Index l = lambdas_.size();
  for (int i = 0; i < count; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < l; ++k) {
      const double z = rng.next_normal();
      s += lambdas_[k] * z * z;
    }
    out[i] = s;
  }
  return out;
}

}  // namespace invreg::wchi2
