#pragma once

namespace invreg::prob {

double normal_cdf(double x);
double normal_quantile(double p);

// upper regularized incomplete gamma Q(a, x)
double gamma_q(double a, double x);

double chi2_cdf(double x, int df);
double chi2_sf(double x, int df);
double chi2_quantile(double p, int df);

}  // namespace invreg::prob
