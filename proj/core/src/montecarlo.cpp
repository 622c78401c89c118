#include "invreg/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "invreg/covadj.hpp"
#include "invreg/cre.hpp"
#include "invreg/inference.hpp"
#include "invreg/invlogit.hpp"
#include "invreg/obs.hpp"
#include "invreg/rng.hpp"
#include "invreg/sre.hpp"
#include "invreg/wchi2.hpp"

namespace invreg::mc {

namespace {

Matrix chol_factor(const Matrix& cov, const char* what) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::InvalidSpec, std::string(what) + " must be positive definite");
  return llt.matrixL();
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void DgpSpec::validate() const {
  if (n < 4) throw Error(ErrorCode::InvalidSpec, "dgp: n must be at least 4");
  if (L < 1) throw Error(ErrorCode::InvalidSpec, "dgp: L must be at least 1");
  if (K < 0 || S < 1) throw Error(ErrorCode::InvalidSpec, "dgp: bad K or S");
  if (tau.size() != L) throw Error(ErrorCode::InvalidSpec, "dgp: tau must have length L");
  if (outcome_cov.rows() != L || outcome_cov.cols() != L)
    throw Error(ErrorCode::InvalidSpec, "dgp: outcome_cov must be L x L");
  if (design == Design::SRE_REGRESSION || design == Design::SRE_STRATIFICATION) {
    if (stratum_probs.size() != S)
      throw Error(ErrorCode::InvalidSpec, "dgp: stratum_probs must have length S");
    double sum = 0.0;
    for (int s = 0; s < S; ++s) {
      if (!(stratum_probs[s] > 0.0 && stratum_probs[s] < 1.0))
        throw Error(ErrorCode::InvalidSpec, "dgp: stratum_probs must lie in (0,1)");
      sum += stratum_probs[s];
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw Error(ErrorCode::InvalidSpec, "dgp: stratum_probs must sum to 1");
    if (treatment_probs.size() != 1 && treatment_probs.size() != S)
      throw Error(ErrorCode::InvalidSpec, "dgp: treatment_probs must be scalar or length S");
  } else if (design == Design::CRE) {
    if (treatment_probs.size() != 1)
      throw Error(ErrorCode::InvalidSpec, "dgp: CRE needs a scalar treatment probability");
  } else {
    if (K < 1) throw Error(ErrorCode::InvalidSpec, "dgp: OBS needs K >= 1");
    if (propensity_alpha.size() != K + 1)
      throw Error(ErrorCode::InvalidSpec, "dgp: propensity_alpha must have length K+1");
  }
  for (int i = 0; i < treatment_probs.size(); ++i)
    if (!(treatment_probs[i] > 0.0 && treatment_probs[i] < 1.0))
      throw Error(ErrorCode::InvalidSpec, "dgp: treatment probabilities must lie in (0,1)");
  if (K > 0) {
    if (covariate_cov.rows() != K || covariate_cov.cols() != K)
      throw Error(ErrorCode::InvalidSpec, "dgp: covariate_cov must be K x K");
    if (x_loading.rows() != L || x_loading.cols() != K)
      throw Error(ErrorCode::InvalidSpec, "dgp: x_loading must be L x K");
  }
}

double DgpSpec::treatment_prob(int stratum_1based) const {
  if (treatment_probs.size() == 1) return treatment_probs[0];
  return treatment_probs[stratum_1based - 1];
}

StudyData generate(const DgpSpec& spec, std::uint64_t replicate_index) {
  spec.validate();
  const Matrix eps_chol = chol_factor(spec.outcome_cov, "outcome_cov");
  const Matrix x_chol = spec.K > 0 ? chol_factor(spec.covariate_cov, "covariate_cov")
                                   : Matrix();

  for (std::uint64_t attempt = 0; attempt < 50; ++attempt) {
    CounterRng rng(spec.seed, replicate_index * 64 + attempt);
    Vector z(spec.n);
    Matrix y(spec.n, spec.L);
    Matrix x(spec.n, spec.K);
    std::vector<int> stratum;
    const bool stratified =
        spec.design == Design::SRE_REGRESSION || spec.design == Design::SRE_STRATIFICATION;
    if (stratified) stratum.resize(spec.n);

    for (int i = 0; i < spec.n; ++i) {
      Vector xi(spec.K);
      if (spec.K > 0) {
        xi = x_chol * rng.normal_vector(spec.K);
        x.row(i) = xi.transpose();
      }
      const Vector eps = eps_chol * rng.normal_vector(spec.L);
      double zi;
      if (spec.design == Design::CRE) {
        zi = rng.next_bernoulli(spec.treatment_probs[0]) ? 1.0 : 0.0;
      } else if (stratified) {
        const double u = rng.next_unit();
        int c = spec.S;
        double acc = 0.0;
        for (int s = 0; s < spec.S; ++s) {
          acc += spec.stratum_probs[s];
          if (u < acc) {
            c = s + 1;
            break;
          }
        }
        stratum[i] = c;
        zi = rng.next_bernoulli(spec.treatment_prob(c)) ? 1.0 : 0.0;
      } else {
        double lin = spec.propensity_alpha[0];
        for (int k = 0; k < spec.K; ++k) lin += spec.propensity_alpha[k + 1] * xi[k];
        zi = rng.next_bernoulli(logistic(lin)) ? 1.0 : 0.0;
      }
      z[i] = zi;
      Vector yi = eps + zi * spec.tau;
      if (spec.K > 0) yi += spec.x_loading * xi;
      y.row(i) = yi.transpose();
    }

    try {
      return StudyData::from_columns(std::move(z), std::move(y), std::move(x),
                                     std::move(stratum), {}, {});
    } catch (const Error&) {
      // degenerate draw (empty arm / degenerate stratum); deterministic retry
    }
  }
  throw Error(ErrorCode::InvalidSpec,
              "dgp: could not draw a valid replicate in 50 attempts (n too small?)");
}

double population_tau_c(const DgpSpec& spec, Design analysis) {
  Matrix c_y = spec.outcome_cov;
  if (spec.K > 0) c_y += spec.x_loading * spec.covariate_cov * spec.x_loading.transpose();
  const Eigen::LDLT<Matrix> ldlt(c_y);
  const double a = spec.tau.dot(ldlt.solve(spec.tau));

  switch (analysis) {
    case Design::CRE: {
      const double p = spec.treatment_probs[0];
      const double q = p * (1.0 - p);
      return q * a / (1.0 + q * a);
    }
    case Design::SRE_REGRESSION: {
      double qbar = 0.0;
      for (int s = 1; s <= spec.S; ++s) {
        const double p = spec.treatment_prob(s);
        qbar += spec.stratum_probs[s - 1] * p * (1.0 - p);
      }
      return qbar * a / (1.0 + qbar * a);
    }
    case Design::SRE_STRATIFICATION: {
      double out = 0.0;
      for (int s = 1; s <= spec.S; ++s) {
        const double p = spec.treatment_prob(s);
        const double q = p * (1.0 - p);
        out += spec.stratum_probs[s - 1] * q * a / (1.0 + q * a);
      }
      return out;
    }
    case Design::OBS:
      return a / (4.0 + a);
  }
  throw Error(ErrorCode::InvalidSpec, "population_tau_c: unknown design");
}

Method method_from_name(const std::string& name) {
  if (name == "wald-cre") return Method::WaldCre;
  if (name == "wald-sre") return Method::WaldSre;
  if (name == "wald-obs") return Method::WaldObs;
  if (name == "wald-cre-adjusted") return Method::WaldCreAdjusted;
  if (name == "wald-obs-adjusted") return Method::WaldObsAdjusted;
  if (name == "wald-logit-cre") return Method::WaldLogitCre;
  if (name == "wald-logit-sre") return Method::WaldLogitSre;
  if (name == "ci-cre") return Method::CiCre;
  if (name == "ci-sre") return Method::CiSre;
  if (name == "ci-obs") return Method::CiObs;
  if (name == "nulldist-cre") return Method::NullDistCre;
  if (name == "nulldist-sre") return Method::NullDistSre;
  if (name == "nulldist-obs") return Method::NullDistObs;
  if (name == "nulldist-logit-cre") return Method::NullDistLogitCre;
  if (name == "nulldist-logit-sre") return Method::NullDistLogitSre;
  if (name == "estimate-cre") return Method::EstimateCre;
  if (name == "estimate-sre") return Method::EstimateSre;
  if (name == "estimate-obs") return Method::EstimateObs;
  throw Error(ErrorCode::InvalidSpec, "unknown study method: " + name);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::WaldCre: return "wald-cre";
    case Method::WaldSre: return "wald-sre";
    case Method::WaldObs: return "wald-obs";
    case Method::WaldCreAdjusted: return "wald-cre-adjusted";
    case Method::WaldObsAdjusted: return "wald-obs-adjusted";
    case Method::WaldLogitCre: return "wald-logit-cre";
    case Method::WaldLogitSre: return "wald-logit-sre";
    case Method::CiCre: return "ci-cre";
    case Method::CiSre: return "ci-sre";
    case Method::CiObs: return "ci-obs";
    case Method::NullDistCre: return "nulldist-cre";
    case Method::NullDistSre: return "nulldist-sre";
    case Method::NullDistObs: return "nulldist-obs";
    case Method::NullDistLogitCre: return "nulldist-logit-cre";
    case Method::NullDistLogitSre: return "nulldist-logit-sre";
    case Method::EstimateCre: return "estimate-cre";
    case Method::EstimateSre: return "estimate-sre";
    case Method::EstimateObs: return "estimate-obs";
  }
  return "?";
}

namespace {

struct Rec {
  bool ok = false;
  bool reject = false;
  bool cover = false;
  double est = 0.0;
  Vector lambdas;
};

Rec run_one(const DgpSpec& spec, const StudyConfig& cfg, std::uint64_t rep) {
  Rec rec;
  const StudyData data = generate(spec, rep);
  DesignSpec dspec;
  dspec.alpha = cfg.alpha;
  dspec.eta = cfg.eta;
  dspec.ci_method = cfg.ci_method;

  switch (cfg.method) {
    case Method::WaldCre: {
      const auto fit = cre::fit(data);
      rec.reject = cre::wald_test(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c;
      break;
    }
    case Method::WaldSre: {
      const auto fit = sre::fit_regression(data);
      rec.reject = sre::wald_test_sr(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_sr;
      break;
    }
    case Method::WaldObs: {
      const auto fit = obs::fit(data, obs::WeightsSource::ESTIMATE);
      rec.reject = obs::wald_test_os(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_os;
      break;
    }
    case Method::WaldCreAdjusted: {
      const auto fit = covadj::fit_cre_adjusted(data);
      rec.reject = covadj::wald_cre_adjusted(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_a;
      break;
    }
    case Method::WaldObsAdjusted: {
      const auto fit = covadj::fit_obs_adjusted(data, obs::WeightsSource::ESTIMATE);
      rec.reject = covadj::wald_obs_adjusted(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_a;
      break;
    }
    case Method::WaldLogitCre: {
      const auto fit = invlogit::fit_logit(data, false);
      rec.reject = invlogit::wald_logit(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_logit;
      break;
    }
    case Method::WaldLogitSre: {
      const auto fit = invlogit::fit_logit(data, true);
      rec.reject = invlogit::wald_logit(fit, data).p_value < cfg.alpha;
      rec.est = fit.tau_c_logit;
      break;
    }
    case Method::CiCre: {
      const auto fit = cre::fit(data);
      const ConfInterval ci = cre::confidence_interval(fit, data, dspec);
      const double target = population_tau_c(spec, Design::CRE);
      rec.cover = ci.lower <= target && target <= ci.upper;
      rec.est = fit.tau_c;
      break;
    }
    case Method::CiSre: {
      const auto fit = sre::fit_regression(data);
      const ConfInterval ci = sre::confidence_interval_sr(fit, data, dspec);
      const double target = population_tau_c(spec, Design::SRE_REGRESSION);
      rec.cover = ci.lower <= target && target <= ci.upper;
      rec.est = fit.tau_c_sr;
      break;
    }
    case Method::CiObs: {
      const auto fit = obs::fit(data, obs::WeightsSource::ESTIMATE);
      const ConfInterval ci = obs::confidence_interval_os(fit, data, dspec);
      const double target = population_tau_c(spec, Design::OBS);
      rec.cover = ci.lower <= target && target <= ci.upper;
      rec.est = fit.tau_c_os;
      break;
    }
    case Method::NullDistCre: {
      const auto fit = cre::fit(data);
      rec.est = data.n() * fit.tau_c;
      rec.lambdas = cre::gamma_null(fit, data).lambdas();
      break;
    }
    case Method::NullDistSre: {
      const auto fit = sre::fit_regression(data);
      rec.est = data.n() * fit.tau_c_sr;
      rec.lambdas = sre::gamma_null_sr(fit, data).lambdas();
      break;
    }
    case Method::NullDistObs: {
      const auto fit = obs::fit(data, obs::WeightsSource::ESTIMATE);
      rec.est = data.n() * fit.tau_c_os;
      rec.lambdas = obs::gamma_null_os(fit, data).lambdas();
      break;
    }
    case Method::NullDistLogitCre: {
      const auto fit = invlogit::fit_logit(data, false);
      rec.est = data.n() * fit.tau_c_logit;
      rec.lambdas = invlogit::null_spectrum_logit(fit, data).lambdas();
      break;
    }
    case Method::NullDistLogitSre: {
      const auto fit = invlogit::fit_logit(data, true);
      rec.est = data.n() * fit.tau_c_logit;
      rec.lambdas = invlogit::null_spectrum_logit(fit, data).lambdas();
      break;
    }
    case Method::EstimateCre:
      rec.est = cre::fit(data).tau_c;
      break;
    case Method::EstimateSre:
      rec.est = sre::fit_regression(data).tau_c_sr;
      break;
    case Method::EstimateObs:
      rec.est = obs::fit(data, obs::WeightsSource::ESTIMATE).tau_c_os;
      break;
  }
  rec.ok = true;
  return rec;
}

}  // namespace

SimSummary run_study(const DgpSpec& spec, const StudyConfig& cfg) {
  if (cfg.reps < 100)
    throw Error(ErrorCode::InvalidSpec, "run_study: at least 100 replications required");
  spec.validate();

  std::vector<Rec> recs(cfg.reps);
  auto worker = [&](int begin, int end) {
    for (int r = begin; r < end; ++r) {
      try {
        recs[r] = run_one(spec, cfg, static_cast<std::uint64_t>(r));
      } catch (const Error&) {
        recs[r].ok = false;
      }
    }
  };
  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    worker(0, cfg.reps);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (cfg.reps + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int b = w * chunk;
      const int e = std::min(cfg.reps, b + chunk);
      if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& t : pool) t.join();
  }

  SimSummary out;
  out.method = method_name(cfg.method);
  out.replications = cfg.reps;
  std::vector<double> ests;
  ests.reserve(cfg.reps);
  long rejections = 0, covers = 0;
  Vector lambda_sum;
  for (const Rec& r : recs) {
    if (!r.ok) {
      ++out.failures;
      continue;
    }
    ++out.completed;
    ests.push_back(r.est);
    if (r.reject) ++rejections;
    if (r.cover) ++covers;
    if (r.lambdas.size() > 0) {
      if (lambda_sum.size() == 0) lambda_sum = Vector::Zero(r.lambdas.size());
      lambda_sum += r.lambdas;
    }
  }
  if (out.completed == 0)
    throw Error(ErrorCode::StudyFailure, "all replicates failed");
  const double frac_failed =
      static_cast<double>(out.failures) / static_cast<double>(cfg.reps);
  if (frac_failed > cfg.max_failure_rate)
    throw Error(ErrorCode::StudyFailure,
                "replicate failure rate " + std::to_string(frac_failed) +
                    " exceeds the allowed " + std::to_string(cfg.max_failure_rate));

  const double m = static_cast<double>(out.completed);
  double mean = 0.0;
  for (double v : ests) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : ests) var += (v - mean) * (v - mean);
  out.est_mean = mean;
  out.est_var = out.completed > 1 ? var / (m - 1.0) : 0.0;

  switch (cfg.method) {
    case Method::CiCre:
      out.true_value = population_tau_c(spec, Design::CRE);
      break;
    case Method::CiSre:
      out.true_value = population_tau_c(spec, Design::SRE_REGRESSION);
      break;
    case Method::CiObs:
      out.true_value = population_tau_c(spec, Design::OBS);
      break;
    default:
      break;
  }

  const bool is_wald = cfg.method == Method::WaldCre || cfg.method == Method::WaldSre ||
                       cfg.method == Method::WaldObs ||
                       cfg.method == Method::WaldCreAdjusted ||
                       cfg.method == Method::WaldObsAdjusted ||
                       cfg.method == Method::WaldLogitCre ||
                       cfg.method == Method::WaldLogitSre;
  const bool is_ci = cfg.method == Method::CiCre || cfg.method == Method::CiSre ||
                     cfg.method == Method::CiObs;
  const bool is_null = cfg.method == Method::NullDistCre ||
                       cfg.method == Method::NullDistSre ||
                       cfg.method == Method::NullDistObs ||
                       cfg.method == Method::NullDistLogitCre ||
                       cfg.method == Method::NullDistLogitSre;
  if (is_wald) {
    out.has_rejection = true;
    out.rejection_rate = static_cast<double>(rejections) / m;
    out.rejection_se = std::sqrt(out.rejection_rate * (1.0 - out.rejection_rate) / m);
  }
  if (is_ci) {
    out.has_coverage = true;
    out.coverage = static_cast<double>(covers) / m;
    out.coverage_se = std::sqrt(out.coverage * (1.0 - out.coverage) / m);
  }
  if (is_null && lambda_sum.size() > 0) {
    out.reference_lambdas = lambda_sum / m;
    const wchi2::WeightedChiSq ref = detail::make_null_spectrum(out.reference_lambdas);
    std::sort(ests.begin(), ests.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < ests.size(); ++i) {
      const double fx = ref.cdf(ests[i]);
      const double lo = static_cast<double>(i) / m;
      const double hi = static_cast<double>(i + 1) / m;
      ks = std::max(ks, std::max(std::abs(fx - lo), std::abs(fx - hi)));
    }
    out.has_ks = true;
    out.ks_statistic = ks;
  }
  return out;
}

}  // namespace invreg::mc
