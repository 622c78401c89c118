#pragma once

#include <vector>

#include "invreg/dataset.hpp"
#include "invreg/rng.hpp"
#include "invreg/types.hpp"

namespace testutil {

using invreg::Matrix;
using invreg::StudyData;
using invreg::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(v.size());
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline StudyData make_study(Vector z, Matrix y, Matrix x = Matrix(),
                            std::vector<int> stratum = {}, Vector w = Vector()) {
  if (x.size() == 0) x = Matrix(z.size(), 0);
  return StudyData::from_columns(std::move(z), std::move(y), std::move(x),
                                 std::move(stratum), std::move(w), {});
}

// z=(1,1,0,0), y=(2,4,1,3): the worked 4-row example
inline StudyData four_row() {
  Matrix y(4, 1);
  y << 2, 4, 1, 3;
  return make_study(vec({1, 1, 0, 0}), y);
}

struct RandomStudyOpts {
  int n = 60;
  int l = 2;
  int k = 0;
  int s = 1;
  bool weights = false;
  double tau_scale = 0.0;  // shift added to treated outcomes
};

// generic full-rank random study; z balanced-ish Bernoulli(0.5)
inline StudyData random_study(std::uint64_t seed, const RandomStudyOpts& o) {
  invreg::CounterRng rng(seed, 7777);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vector z(o.n);
    Matrix y(o.n, o.l);
    Matrix x(o.n, o.k);
    std::vector<int> stratum;
    if (o.s > 1) stratum.resize(o.n);
    Vector w(o.weights ? o.n : 0);
    for (int i = 0; i < o.n; ++i) {
      const int c = o.s > 1 ? 1 + static_cast<int>(rng.next_unit() * o.s) % o.s : 1;
      if (o.s > 1) stratum[i] = c;
      z[i] = rng.next_bernoulli(0.35 + 0.1 * c) ? 1.0 : 0.0;
      for (int j = 0; j < o.k; ++j) x(i, j) = rng.next_normal();
      for (int j = 0; j < o.l; ++j) {
        double v = rng.next_normal() + 0.3 * rng.next_normal() * (j + 1);
        for (int m = 0; m < o.k; ++m) v += 0.4 * x(i, m) / (1 + j + m);
        if (z[i] == 1.0) v += o.tau_scale * (j + 1) / o.l;
        y(i, j) = v;
      }
      if (o.weights) w[i] = 0.5 + 2.0 * rng.next_unit();
    }
    try {
      return make_study(std::move(z), std::move(y), std::move(x), std::move(stratum),
                        std::move(w));
    } catch (const invreg::Error&) {
      // degenerate draw; try again deterministically
    }
  }
  throw std::runtime_error("random_study: could not build a valid dataset");
}

inline Matrix random_nonsingular(std::uint64_t seed, int l) {
  invreg::CounterRng rng(seed, 4242);
  for (int attempt = 0; attempt < 32; ++attempt) {
    Matrix m(l, l);
    for (int i = 0; i < l; ++i)
      for (int j = 0; j < l; ++j) m(i, j) = rng.next_normal();
    m += 0.5 * Matrix::Identity(l, l);
    if (std::abs(m.determinant()) > 1e-3) return m;
  }
  return Matrix::Identity(l, l);
}

// study with outcomes transformed by omega (y -> y * omega^T)
inline StudyData transform_outcomes(const StudyData& d, const Matrix& omega) {
  Matrix y = d.y() * omega.transpose();
  std::vector<int> stratum(d.stratum());
  Vector w = d.user_weights();
  return StudyData::from_columns(d.z(), std::move(y), d.x(), std::move(stratum), std::move(w),
                                 d.roles());
}

inline StudyData duplicate_rows(const StudyData& d) {
  const int n = d.n();
  Vector z(2 * n);
  Matrix y(2 * n, d.L());
  Matrix x(2 * n, d.K());
  std::vector<int> stratum;
  if (d.has_strata()) stratum.resize(2 * n);
  Vector w(d.has_user_weights() ? 2 * n : 0);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < 2; ++r) {
      const int j = 2 * i + r;
      z[j] = d.z()[i];
      y.row(j) = d.y().row(i);
      if (d.K() > 0) x.row(j) = d.x().row(i);
      if (d.has_strata()) stratum[j] = d.stratum()[i];
      if (d.has_user_weights()) w[j] = d.user_weights()[i];
    }
  }
  return StudyData::from_columns(std::move(z), std::move(y), std::move(x), std::move(stratum),
                                 std::move(w), d.roles());
}

}  // namespace testutil
