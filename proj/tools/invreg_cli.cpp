#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invreg/covadj.hpp"
#include "invreg/inference.hpp"
#include "invreg/cre.hpp"
#include "invreg/dataset.hpp"
#include "invreg/invlogit.hpp"
#include "invreg/montecarlo.hpp"
#include "invreg/obs.hpp"
#include "invreg/report.hpp"
#include "invreg/sre.hpp"
#include "invreg/tomlmini.hpp"
#include "invreg/wchi2.hpp"

namespace {

using invreg::ConfInterval;
using invreg::Design;
using invreg::DesignSpec;
using invreg::Error;
using invreg::ErrorKind;
using invreg::Matrix;
using invreg::Vector;
using invreg::WaldResult;
namespace report = invreg::report;

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Vector parse_lambdas(const std::string& s) {
  const auto parts = split_commas(s);
  if (parts.empty()) throw Error(invreg::ErrorCode::InvalidSpec, "--lambdas is empty");
  Vector v(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      v[static_cast<Eigen::Index>(i)] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw Error(invreg::ErrorCode::InvalidSpec, "bad lambda: " + parts[i]);
    }
  }
  return v;
}

Design parse_design(const std::string& s) {
  if (s == "cre") return Design::CRE;
  if (s == "sre-reg") return Design::SRE_REGRESSION;
  if (s == "sre-strat") return Design::SRE_STRATIFICATION;
  if (s == "obs") return Design::OBS;
  throw Error(invreg::ErrorCode::InvalidSpec,
              "--design must be cre|sre-reg|sre-strat|obs, got '" + s + "'");
}

invreg::CiMethod parse_ci(const std::string& s) {
  if (s == "auto") return invreg::CiMethod::AUTO_TWO_STEP;
  if (s == "normal") return invreg::CiMethod::NORMAL;
  if (s == "chi2") return invreg::CiMethod::CHI2;
  if (s == "union") return invreg::CiMethod::UNION;
  throw Error(invreg::ErrorCode::InvalidSpec,
              "--ci must be auto|normal|chi2|union, got '" + s + "'");
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out)
      throw Error(invreg::ErrorCode::InvalidSpec, "cannot write to " + out_path);
    out << text;
  }
  // sidecar timestamp: never part of the payload, so reports stay byte-stable
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  std::cerr << "generated_at_unix_ms="
            << std::chrono::duration_cast<std::chrono::milliseconds>(now).count() << "\n";
}

report::Node wald_node(const WaldResult& w) {
  report::Node n = report::Node::object();
  n.set("statistic", report::Node::number(w.statistic));
  n.set("df", report::Node::integer(w.df));
  n.set("p", report::Node::number(w.p_value));
  return n;
}

report::Node ci_node(const ConfInterval& ci, const std::string& method_override = "") {
  report::Node n = report::Node::object();
  n.set("lower", report::Node::number(ci.lower));
  n.set("upper", report::Node::number(ci.upper));
  n.set("method", report::Node::str(method_override.empty() ? ci_method_name(ci.method)
                                                            : method_override));
  n.set("level", report::Node::number(ci.level));
  n.set("regime_note", report::Node::str(ci.regime_note));
  return n;
}

// empirical-quantile interval used when the Imhof CDF reports failure
ConfInterval mc_fallback_interval(double tau_c, int n, const DesignSpec& spec,
                                  const invreg::wchi2::WeightedChiSq& dist,
                                  const WaldResult* wald, std::uint64_t seed,
                                  std::vector<std::string>& warnings) {
  const int draws = 1000000;
  Vector sample = dist.sample(draws, seed);
  std::sort(sample.data(), sample.data() + sample.size());
  auto q = [&](double p) {
    const double idx = p * (draws - 1);
    const auto lo = static_cast<Eigen::Index>(idx);
    const auto hi = std::min<Eigen::Index>(lo + 1, draws - 1);
    const double frac = idx - static_cast<double>(lo);
    return sample[lo] * (1.0 - frac) + sample[hi] * frac;
  };
  const double dn = n;
  double alpha = spec.alpha;
  ConfInterval ci;
  ci.level = 1.0 - spec.alpha;
  ci.method = spec.ci_method == invreg::CiMethod::AUTO_TWO_STEP ? invreg::CiMethod::TWO_STEP
                                                                : spec.ci_method;
  if (ci.method == invreg::CiMethod::TWO_STEP) {
    alpha = spec.alpha - spec.effective_eta();
    // the pre-test must have kept the null for the chi2 branch to be in play
    if (wald && wald->p_value < spec.effective_eta())
      throw Error(invreg::ErrorCode::IntegrationFailure,
                  "fallback reached in normal regime; this is a bug");
  }
  ci.lower = tau_c - q(1.0 - alpha / 2.0) / dn;
  ci.upper = tau_c - q(alpha / 2.0) / dn;
  ci.regime_note = "weighted chi-squared regime, mc-approximated quantiles";
  warnings.push_back("mc-approximated: Imhof CDF failed; quantiles from 10^6 seeded draws");
  return ci;
}

template <typename VarFn, typename GammaFn, typename WaldFn>
ConfInterval interval_with_fallback(double tau_c, int n, const DesignSpec& spec, VarFn var_fn,
                                    GammaFn gamma_fn, WaldFn wald_fn, std::uint64_t mc_seed,
                                    std::vector<std::string>& warnings) {
  std::optional<WaldResult> wald;
  try {
    return invreg::detail::dual_regime_interval(
        tau_c, n, spec, var_fn, gamma_fn, [&] {
          wald = wald_fn();
          return *wald;
        });
  } catch (const Error& e) {
    if (e.code() != invreg::ErrorCode::IntegrationFailure) throw;
    if (spec.ci_method == invreg::CiMethod::TWO_STEP ||
        spec.ci_method == invreg::CiMethod::AUTO_TWO_STEP) {
      if (!wald) wald = wald_fn();
      if (wald->p_value < spec.effective_eta()) throw;  // normal branch cannot fail here
    }
    if (spec.ci_method == invreg::CiMethod::NORMAL) throw;
    ConfInterval ci = mc_fallback_interval(tau_c, n, spec, gamma_fn(),
                                           wald ? &*wald : nullptr, mc_seed, warnings);
    if (spec.ci_method == invreg::CiMethod::UNION) {
      const double v = var_fn();
      const double half =
          invreg::prob::normal_quantile(1.0 - spec.alpha / 2.0) * std::sqrt(v / n);
      ci.lower = std::min(ci.lower, tau_c - half);
      ci.upper = std::max(ci.upper, tau_c + half);
      ci.method = invreg::CiMethod::UNION;
      ci.regime_note = "union of normal and mc-approximated chi-squared intervals";
    }
    return ci;
  }
}

struct AnalyzeArgs {
  std::string data_path;
  std::string treatment;
  std::string outcomes_csv;
  std::string covariates_csv;
  std::string stratum;
  std::string weights;
  std::string design_str;
  bool adjust = false;
  double alpha = 0.05;
  std::string ci_str = "auto";
  double eta = 0.0;
  bool inverse_logistic = false;
  double r_value = std::numeric_limits<double>::quiet_NaN();  // NaN -> r_opt
  int bootstrap = 1000;
  std::uint64_t bootstrap_seed = 1;
  std::uint64_t mc_seed = 20240809;
  std::string out_path;
};

void add_spectrum_info(report::Node& root, const Vector& lambdas, bool clamped,
                       std::vector<std::string>& warnings) {
  root.set("null_spectrum", report::Node::vector(lambdas));
  if (clamped)
    warnings.push_back("null spectrum had tiny negative eigenvalues clamped to zero");
}

int run_analyze(const AnalyzeArgs& a) {
  invreg::ColumnRoles roles;
  roles.treatment = a.treatment;
  roles.outcomes = split_commas(a.outcomes_csv);
  roles.covariates = split_commas(a.covariates_csv);
  roles.stratum = a.stratum;
  roles.weights = a.weights;

  const Design design = parse_design(a.design_str);
  DesignSpec dspec;
  dspec.design = design;
  dspec.adjust_covariates = a.adjust;
  dspec.alpha = a.alpha;
  dspec.ci_method = parse_ci(a.ci_str);
  dspec.eta = a.eta;
  dspec.validate();

  if (design == Design::OBS && roles.covariates.empty() && roles.weights.empty())
    throw Error(invreg::ErrorCode::InvalidSpec, "obs requires covariates or weights");
  if ((design == Design::SRE_REGRESSION || design == Design::SRE_STRATIFICATION) &&
      roles.stratum.empty())
    throw Error(invreg::ErrorCode::InvalidSpec, "stratified designs require --stratum");
  if (design == Design::SRE_STRATIFICATION && a.adjust)
    throw Error(invreg::ErrorCode::InvalidSpec,
                "--adjust is not available for sre-strat; use sre-reg or analyze per stratum");
  if (a.inverse_logistic && design != Design::CRE && design != Design::SRE_REGRESSION)
    throw Error(invreg::ErrorCode::InvalidSpec,
                "--inverse-logistic applies to cre and sre-reg only");
  if (a.adjust && roles.covariates.empty())
    throw Error(invreg::ErrorCode::InvalidSpec, "--adjust requires --covariates");

  const invreg::StudyData data = invreg::load_csv(a.data_path, roles);

  std::vector<std::string> warnings;
  report::Node root = report::Node::object();
  root.set("schema_version", report::Node::integer(report::kSchemaVersion));
  root.set("design", report::Node::str(design_name(design)));
  root.set("adjusted", report::Node::boolean(a.adjust));
  root.set("n", report::Node::integer(data.n()));
  root.set("L", report::Node::integer(data.L()));
  root.set("K", report::Node::integer(data.K()));
  root.set("S", report::Node::integer(data.has_strata() ? data.S() : 1));

  report::Node identity = report::Node::object();

  if (design == Design::SRE_STRATIFICATION) {
    const auto fit = invreg::sre::fit_stratification(data);
    root.set("beta", report::Node::null());
    root.set("tau", report::Node::vector(fit.tau_aggregate));
    root.set("tau_c", report::Node::number(fit.tau_c_aggregate));
    root.set("wald", report::Node::null());
    root.set("ci", report::Node::null());
    warnings.push_back(
        "stratification strategy: inference is per-stratum; no pooled Wald/CI is defined");
    report::Node strata = report::Node::array();
    for (std::size_t s = 0; s < fit.by_stratum.size(); ++s) {
      report::Node one = report::Node::object();
      one.set("label", report::Node::str(fit.labels[s]));
      one.set("n", report::Node::integer(fit.sizes[s]));
      one.set("beta", report::Node::vector(fit.by_stratum[s].beta));
      one.set("tau", report::Node::vector(fit.by_stratum[s].tau));
      one.set("tau_c", report::Node::number(fit.by_stratum[s].tau_c));
      strata.push(std::move(one));
    }
    root.set("by_stratum", std::move(strata));
    identity.set("prop1_form1_max",
                 report::Node::number([&] {
                   double m = 0.0;
                   for (const auto& f : fit.by_stratum)
                     m = std::max(m, f.prop1_form1_rel_err);
                   return m;
                 }()));
  } else if (design == Design::CRE && !a.adjust) {
    const auto fit = invreg::cre::fit(data);
    const WaldResult wald = invreg::cre::wald_test(fit, data);
    const ConfInterval ci = interval_with_fallback(
        fit.tau_c, data.n(), dspec, [&] { return invreg::cre::variance_normal(fit, data); },
        [&] { return invreg::cre::gamma_null(fit, data); }, [&] { return wald; }, a.mc_seed,
        warnings);
    root.set("beta", report::Node::vector(fit.beta));
    root.set("tau", report::Node::vector(fit.tau));
    root.set("tau_c", report::Node::number(fit.tau_c));
    root.set("wald", wald_node(wald));
    root.set("ci", ci_node(ci));
    try {
      add_spectrum_info(root, invreg::cre::gamma_null(fit, data).lambdas(), false, warnings);
    } catch (const Error& e) {
      warnings.push_back(std::string("null spectrum unavailable: ") + e.what());
    }
    identity.set("prop1_form1", report::Node::number(fit.prop1_form1_rel_err));
    identity.set("prop1_form2", fit.sigma_invertible
                                    ? report::Node::number(fit.prop1_form2_rel_err)
                                    : report::Node::null());
    if (!fit.sigma_invertible)
      warnings.push_back("Sigma-hat singular; rank-one identity check skipped");
    identity.set("two_step", report::Node::number(fit.two_step_rel_err));
  } else if (design == Design::CRE && a.adjust) {
    const auto fit = invreg::covadj::fit_cre_adjusted(data);
    const WaldResult wald = invreg::covadj::wald_cre_adjusted(fit, data);
    const ConfInterval ci = interval_with_fallback(
        fit.tau_c_a, data.n(), dspec,
        [&] { return invreg::covadj::variance_cre_adjusted(fit, data); },
        [&] { return invreg::covadj::gamma_cre_adjusted(fit, data); }, [&] { return wald; },
        a.mc_seed, warnings);
    root.set("beta", report::Node::vector(fit.beta_a));
    root.set("beta_x", report::Node::vector(fit.beta_x));
    root.set("tau", report::Node::vector(fit.tau_a));
    root.set("tau_c", report::Node::number(fit.tau_c_a));
    root.set("wald", wald_node(wald));
    root.set("ci", ci_node(ci));
    identity.set("prop_s1", report::Node::number(fit.identity_rel_err));
    identity.set("two_step", report::Node::number(fit.two_step_rel_err));
  } else if (design == Design::SRE_REGRESSION && !a.adjust) {
    const auto fit = invreg::sre::fit_regression(data);
    const WaldResult wald = invreg::sre::wald_test_sr(fit, data);
    const ConfInterval ci = interval_with_fallback(
        fit.tau_c_sr, data.n(), dspec,
        [&] { return invreg::sre::variance_normal_sr(fit, data); },
        [&] { return invreg::sre::gamma_null_sr(fit, data); }, [&] { return wald; },
        a.mc_seed, warnings);
    root.set("beta", report::Node::vector(fit.beta_sr));
    root.set("tau", report::Node::vector(fit.tau_sr));
    root.set("tau_c", report::Node::number(fit.tau_c_sr));
    root.set("wald", wald_node(wald));
    root.set("ci", ci_node(ci));
    identity.set("prop2", report::Node::number(fit.prop2_rel_err));
    identity.set("pooled_zz", report::Node::number(fit.a_zz_identity_err));
  } else if (design == Design::SRE_REGRESSION && a.adjust) {
    invreg::covadj::AdjustedFit fit =
        std::isnan(a.r_value) ? invreg::covadj::fit_sre_adjusted(data, invreg::covadj::ROpt{})
                              : invreg::covadj::fit_sre_adjusted(data, a.r_value);
    const WaldResult wald = invreg::covadj::wald_sre_adjusted(fit, data);
    warnings.push_back(
        "W_SR,A statistic spans the stacked (X,Y) coefficients; df=L per the stated "
        "asymptotics");
    root.set("beta", report::Node::vector(fit.beta_a));
    root.set("beta_x", report::Node::vector(fit.beta_x));
    root.set("tau", report::Node::vector(fit.tau_a));
    root.set("tau_c", report::Node::number(fit.tau_c_a));
    root.set("tau_c_y", report::Node::number(fit.tau_c_y));
    root.set("tau_c_x", report::Node::number(fit.tau_c_x));
    root.set("r_used", report::Node::number(fit.r_used));
    root.set("r_opt_hat", std::isnan(fit.r_opt_hat)
                              ? report::Node::null()
                              : report::Node::number(fit.r_opt_hat));
    root.set("wald", wald_node(wald));
    if (std::isnan(a.r_value) || a.r_value > 0.0) {
      const auto boot =
          invreg::covadj::bootstrap_sre_ropt(data, a.bootstrap, a.bootstrap_seed, a.alpha);
      ConfInterval ci;
      ci.lower = boot.ci_lower;
      ci.upper = boot.ci_upper;
      ci.level = 1.0 - a.alpha;
      ci.regime_note = "bootstrap percentile interval (" + std::to_string(boot.resamples) +
                       " resamples, " + std::to_string(boot.failures) + " failed)";
      root.set("ci", ci_node(ci, "bootstrap-percentile"));
      report::Node bn = report::Node::object();
      bn.set("se", report::Node::number(boot.se));
      bn.set("resamples", report::Node::integer(boot.resamples));
      bn.set("failures", report::Node::integer(boot.failures));
      root.set("bootstrap", std::move(bn));
      warnings.push_back(
          "analytic null spectrum is restricted to r <= 0; bootstrap interval reported");
    } else {
      const double r = a.r_value;
      const ConfInterval ci = interval_with_fallback(
          fit.tau_c_a, data.n(), dspec,
          [&] { return invreg::covadj::variance_sre_adjusted(fit, data, r); },
          [&] { return invreg::covadj::gamma_sre_adjusted(fit, data, r); },
          [&] { return wald; }, a.mc_seed, warnings);
      root.set("ci", ci_node(ci));
    }
    identity.set("prop_s2", report::Node::number(fit.identity_rel_err));
  } else {  // OBS
    const auto source = roles.weights.empty() ? invreg::obs::WeightsSource::ESTIMATE
                                              : invreg::obs::WeightsSource::USER;
    if (source == invreg::obs::WeightsSource::USER)
      warnings.push_back("propensity treated as known (user weights; no score correction)");
    if (!a.adjust) {
      const auto fit = invreg::obs::fit(data, source);
      if (fit.propensity)
        for (const auto& w : fit.propensity->warnings) warnings.push_back(w);
      const WaldResult wald = invreg::obs::wald_test_os(fit, data);
      const ConfInterval ci = interval_with_fallback(
          fit.tau_c_os, data.n(), dspec,
          [&] { return invreg::obs::variance_normal_os(fit, data); },
          [&] { return invreg::obs::gamma_null_os(fit, data); }, [&] { return wald; },
          a.mc_seed, warnings);
      root.set("beta", report::Node::vector(fit.beta_os));
      root.set("tau", report::Node::vector(fit.tau_os));
      root.set("tau_c", report::Node::number(fit.tau_c_os));
      root.set("wald", wald_node(wald));
      root.set("ci", ci_node(ci));
      if (fit.propensity) {
        report::Node pn = report::Node::object();
        pn.set("alpha", report::Node::vector(fit.propensity->alpha));
        pn.set("iterations", report::Node::integer(fit.propensity->iterations));
        root.set("propensity", std::move(pn));
      }
      identity.set("prop3_form1", report::Node::number(fit.prop3_form1_rel_err));
      identity.set("prop3_form2", fit.sigma_invertible
                                      ? report::Node::number(fit.prop3_form2_rel_err)
                                      : report::Node::null());
      identity.set("two_step", report::Node::number(fit.two_step_rel_err));
    } else {
      const auto fit = invreg::covadj::fit_obs_adjusted(data, source);
      if (fit.propensity)
        for (const auto& w : fit.propensity->warnings) warnings.push_back(w);
      const WaldResult wald = invreg::covadj::wald_obs_adjusted(fit, data);
      const ConfInterval ci = interval_with_fallback(
          fit.tau_c_a, data.n(), dspec,
          [&] { return invreg::covadj::variance_obs_adjusted(fit, data); },
          [&] { return invreg::covadj::gamma_obs_adjusted(fit, data); },
          [&] { return wald; }, a.mc_seed, warnings);
      root.set("beta", report::Node::vector(fit.beta_a));
      root.set("beta_x", report::Node::vector(fit.beta_x));
      root.set("tau", report::Node::vector(fit.tau_a));
      root.set("tau_c", report::Node::number(fit.tau_c_a));
      root.set("wald", wald_node(wald));
      root.set("ci", ci_node(ci));
      identity.set("prop_s3", report::Node::number(fit.identity_rel_err));
      identity.set("two_step", report::Node::number(fit.two_step_rel_err));
    }
  }

  if (a.inverse_logistic) {
    const bool stratified = design == Design::SRE_REGRESSION;
    const auto lf = invreg::invlogit::fit_logit(data, stratified);
    const WaldResult lw = invreg::invlogit::wald_logit(lf, data);
    report::Node ln = report::Node::object();
    ln.set("gamma", report::Node::vector(lf.gamma));
    ln.set("tau_c_logit", report::Node::number(lf.tau_c_logit));
    ln.set("wald", wald_node(lw));
    ln.set("iterations", report::Node::integer(lf.iterations));
    ln.set("caveat", report::Node::str("valid under H0: tau=0 only"));
    try {
      ln.set("null_spectrum",
             report::Node::vector(invreg::invlogit::null_spectrum_logit(lf, data).lambdas()));
    } catch (const Error& e) {
      warnings.push_back(std::string("logit null spectrum unavailable: ") + e.what());
    }
    root.set("inverse_logistic", std::move(ln));
  }

  root.set("identity_checks", std::move(identity));
  report::Node warn = report::Node::array();
  for (const auto& w : warnings) warn.push(report::Node::str(w));
  root.set("warnings", std::move(warn));

  emit(root.dump(2), a.out_path);
  return 0;
}

invreg::mc::DgpSpec dgp_from_toml(const invreg::toml::Table& t) {
  invreg::mc::DgpSpec spec;
  spec.design = parse_design(t.get_string("design"));
  spec.n = static_cast<int>(t.get_int("n"));
  spec.L = static_cast<int>(t.get_int("L"));
  spec.K = static_cast<int>(t.get_int_or("K", 0));
  spec.S = static_cast<int>(t.get_int_or("S", 1));
  spec.tau = t.get_vector("tau");
  spec.outcome_cov = t.get_matrix("outcome_cov");
  if (t.has("stratum_probs")) spec.stratum_probs = t.get_vector("stratum_probs");
  if (t.has("treatment_probs")) {
    spec.treatment_probs = t.get_vector("treatment_probs");
  } else if (t.has("treatment_prob")) {
    spec.treatment_probs = Vector::Constant(1, t.get_double("treatment_prob"));
  }
  if (t.has("propensity_alpha")) spec.propensity_alpha = t.get_vector("propensity_alpha");
  if (t.has("covariate_cov")) spec.covariate_cov = t.get_matrix("covariate_cov");
  if (t.has("x_loading")) spec.x_loading = t.get_matrix("x_loading");
  spec.seed = static_cast<std::uint64_t>(t.get_int_or("seed", 1));
  return spec;
}

int run_simulate(const std::string& spec_path, long long reps_override,
                 long long seed_override, int workers, const std::string& out_path) {
  const invreg::toml::Document doc = invreg::toml::parse_file(spec_path);
  invreg::mc::DgpSpec dgp = dgp_from_toml(doc.table("dgp"));
  const invreg::toml::Table& study = doc.table("study");

  invreg::mc::StudyConfig cfg;
  cfg.method = invreg::mc::method_from_name(study.get_string("method"));
  cfg.ci_method = parse_ci(study.get_string_or("ci", "chi2"));
  cfg.alpha = study.get_double_or("alpha", 0.05);
  cfg.eta = study.get_double_or("eta", 0.0);
  cfg.reps = static_cast<int>(study.get_int_or("reps", 1000));
  cfg.max_failure_rate = study.get_double_or("max_failure_rate", 0.01);
  if (reps_override > 0) cfg.reps = static_cast<int>(reps_override);
  if (seed_override >= 0) dgp.seed = static_cast<std::uint64_t>(seed_override);
  cfg.workers = workers;

  const invreg::mc::SimSummary s = invreg::mc::run_study(dgp, cfg);
  report::Node root = report::from_sim_summary(s);
  report::Node echo = report::Node::object();
  echo.set("design", report::Node::str(design_name(dgp.design)));
  echo.set("n", report::Node::integer(dgp.n));
  echo.set("L", report::Node::integer(dgp.L));
  echo.set("K", report::Node::integer(dgp.K));
  echo.set("S", report::Node::integer(dgp.S));
  echo.set("seed", report::Node::integer(static_cast<long long>(dgp.seed)));
  echo.set("alpha", report::Node::number(cfg.alpha));
  echo.set("ci", report::Node::str(ci_method_name(cfg.ci_method)));
  root.set("config", std::move(echo));
  emit(root.dump(2), out_path);
  return 0;
}

int run_wchi2(const std::string& lambdas_csv, double cdf_at, double quantile_at,
              bool have_cdf, bool have_quantile) {
  const invreg::wchi2::WeightedChiSq dist(parse_lambdas(lambdas_csv));
  if (have_cdf == have_quantile)
    throw Error(invreg::ErrorCode::InvalidSpec, "give exactly one of --cdf or --quantile");
  const double value = have_cdf ? dist.cdf(cdf_at) : dist.quantile(quantile_at);
  std::printf("%.17g\n", value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"composite-outcome causal inference via inverse regression"};
  app.require_subcommand(1);

  AnalyzeArgs a;
  CLI::App* analyze = app.add_subcommand("analyze", "fit, test and interval one CSV study");
  analyze->add_option("--data", a.data_path, "CSV file")->required();
  analyze->add_option("--treatment", a.treatment, "treatment column")->required();
  analyze->add_option("--outcomes", a.outcomes_csv, "comma-separated outcome columns")
      ->required();
  analyze->add_option("--covariates", a.covariates_csv, "comma-separated covariate columns");
  analyze->add_option("--stratum", a.stratum, "stratum column");
  analyze->add_option("--weights", a.weights, "user propensity-weight column (obs)");
  analyze->add_option("--design", a.design_str, "cre|sre-reg|sre-strat|obs")->required();
  analyze->add_flag("--adjust", a.adjust, "covariate-adjusted variant");
  analyze->add_option("--alpha", a.alpha, "test/CI level");
  analyze->add_option("--ci", a.ci_str, "auto|normal|chi2|union");
  analyze->add_option("--eta", a.eta, "two-step pre-test level (default alpha/2)");
  analyze->add_flag("--inverse-logistic", a.inverse_logistic,
                    "add the inverse logistic section");
  analyze->add_option("--r", a.r_value, "fixed r for sre-reg --adjust (default: r_opt)");
  analyze->add_option("--bootstrap", a.bootstrap, "bootstrap resamples for r_opt");
  analyze->add_option("--bootstrap-seed", a.bootstrap_seed, "bootstrap seed");
  analyze->add_option("--mc-seed", a.mc_seed, "seed for the mc CDF fallback");
  analyze->add_option("--out", a.out_path, "write the JSON report here (default stdout)");

  std::string spec_path, sim_out;
  long long reps_override = 0, seed_override = -1;
  int workers = 1;
  CLI::App* simulate = app.add_subcommand("simulate", "run a seeded Monte Carlo study");
  simulate->add_option("--spec", spec_path, "TOML study spec")->required();
  simulate->add_option("--reps", reps_override, "override replication count");
  simulate->add_option("--seed", seed_override, "override the DGP seed");
  simulate->add_option("--workers", workers, "worker threads (results identical)");
  simulate->add_option("--out", sim_out, "write the JSON summary here (default stdout)");

  std::string lambdas_csv;
  double cdf_at = 0.0, quantile_at = 0.0;
  CLI::App* wchi2cmd = app.add_subcommand("wchi2", "weighted chi-squared CDF/quantile");
  wchi2cmd->add_option("--lambdas", lambdas_csv, "comma-separated nonnegative weights")
      ->required();
  CLI::Option* copt = wchi2cmd->add_option("--cdf", cdf_at, "evaluate the CDF at t");
  CLI::Option* qopt = wchi2cmd->add_option("--quantile", quantile_at, "invert the CDF at p");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    const Error err(invreg::ErrorCode::InvalidSpec, e.what());
    std::cerr << report::error_json(err);
    return kExitValidation;
  }

  try {
    if (*analyze) return run_analyze(a);
    if (*simulate) return run_simulate(spec_path, reps_override, seed_override, workers, sim_out);
    return run_wchi2(lambdas_csv, cdf_at, quantile_at, copt->count() > 0, qopt->count() > 0);
  } catch (const Error& e) {
    std::cerr << report::error_json(e);
    return e.kind() == ErrorKind::Validation ? kExitValidation : kExitNumeric;
  } catch (const std::exception& e) {
    const Error err(invreg::ErrorCode::InvalidSpec, e.what());
    std::cerr << report::error_json(err);
    return kExitNumeric;
  }
}
