#pragma once

#include <string>
#include <vector>

#include "invreg/types.hpp"

namespace invreg {

struct ColumnRoles {
  std::string treatment;
  std::vector<std::string> outcomes;
  std::vector<std::string> covariates;  // optional
  std::string stratum;                  // optional
  std::string weights;                  // optional, OBS only
};

// Immutable column-oriented study data. Strata are relabeled to dense 1..S in
// first-appearance order; original labels kept for reporting.
class StudyData {
 public:
  static StudyData from_columns(Vector z, Matrix y, Matrix x, std::vector<int> stratum_raw,
                                Vector user_weights, ColumnRoles roles = {});

  int n() const { return static_cast<int>(z_.size()); }
  int L() const { return static_cast<int>(y_.cols()); }
  int K() const { return static_cast<int>(x_.cols()); }
  int S() const { return n_strata_; }

  const Vector& z() const { return z_; }
  const Matrix& y() const { return y_; }
  const Matrix& x() const { return x_; }
  const std::vector<int>& stratum() const { return stratum_; }
  const Vector& user_weights() const { return user_weights_; }

  bool has_covariates() const { return x_.cols() > 0; }
  bool has_strata() const { return !stratum_.empty(); }
  bool has_user_weights() const { return user_weights_.size() > 0; }

  const ColumnRoles& roles() const { return roles_; }
  const std::vector<std::string>& stratum_labels() const { return stratum_labels_; }

  // rows of one stratum as a standalone study (weights/covariates sliced too)
  StudyData stratum_slice(int s) const;

 private:
  StudyData() = default;
  Vector z_;
  Matrix y_;
  Matrix x_;
  std::vector<int> stratum_;  // dense 1..S, empty when absent
  Vector user_weights_;
  int n_strata_ = 0;
  std::vector<std::string> stratum_labels_;  // index s-1 -> original label
  ColumnRoles roles_;
};

StudyData load_csv(const std::string& path, const ColumnRoles& roles);
void write_csv(const StudyData& data, const std::string& path);

}  // namespace invreg
