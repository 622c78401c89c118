#include "invreg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "invreg/error.hpp"

namespace invreg {

namespace {

void check_finite(double v, int row, const std::string& col) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite value at row " << row << ", column '" << col << "'";
    throw Error(ErrorCode::NonFiniteValue, msg.str());
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

StudyData StudyData::from_columns(Vector z, Matrix y, Matrix x, std::vector<int> stratum_raw,
                                  Vector user_weights, ColumnRoles roles) {
  const int n = static_cast<int>(z.size());
  const int l = static_cast<int>(y.cols());
  const int k = static_cast<int>(x.cols());

  if (l < 1) throw Error(ErrorCode::MissingColumn, "at least one outcome column is required");
  if (y.rows() != n || (k > 0 && x.rows() != n))
    throw Error(ErrorCode::InvalidSpec, "column lengths differ");
  if (n < l + k + 2) {
    std::ostringstream msg;
    msg << "need n >= L + K + 2 rows (n=" << n << ", L=" << l << ", K=" << k << ")";
    throw Error(ErrorCode::TooFewRows, msg.str());
  }

  int treated = 0, control = 0;
  for (int i = 0; i < n; ++i) {
    const double v = z[i];
    check_finite(v, i, roles.treatment.empty() ? "treatment" : roles.treatment);
    if (v == 0.0)
      ++control;
    else if (v == 1.0)
      ++treated;
    else
      throw Error(ErrorCode::NonBinaryTreatment,
                  "treatment value " + fmt17(v) + " at row " + std::to_string(i) +
                      " is not 0/1");
  }
  if (treated == 0)
    throw Error(ErrorCode::NonBinaryTreatment, "no treated units (all z = 0)");
  if (control == 0)
    throw Error(ErrorCode::NonBinaryTreatment, "no control units (all z = 1)");

  for (int j = 0; j < l; ++j) {
    const std::string col = j < static_cast<int>(roles.outcomes.size())
                                ? roles.outcomes[j]
                                : "y" + std::to_string(j + 1);
    double lo = y(0, j), hi = y(0, j);
    for (int i = 0; i < n; ++i) {
      check_finite(y(i, j), i, col);
      lo = std::min(lo, y(i, j));
      hi = std::max(hi, y(i, j));
    }
    if (lo == hi)
      throw Error(ErrorCode::ConstantOutcome,
                  "outcome '" + col + "' is constant; S_yy would be singular");
  }
  for (int j = 0; j < k; ++j) {
    const std::string col = j < static_cast<int>(roles.covariates.size())
                                ? roles.covariates[j]
                                : "x" + std::to_string(j + 1);
    for (int i = 0; i < n; ++i) check_finite(x(i, j), i, col);
  }

  StudyData d;
  d.roles_ = std::move(roles);

  if (!stratum_raw.empty()) {
    if (static_cast<int>(stratum_raw.size()) != n)
      throw Error(ErrorCode::InvalidSpec, "stratum length differs from n");
    std::map<int, int> relabel;  // original -> dense id, first-appearance order
    d.stratum_.resize(n);
    for (int i = 0; i < n; ++i) {
      auto [it, inserted] = relabel.try_emplace(stratum_raw[i], 0);
      if (inserted) {
        it->second = static_cast<int>(d.stratum_labels_.size()) + 1;
        d.stratum_labels_.push_back(std::to_string(stratum_raw[i]));
      }
      d.stratum_[i] = it->second;
    }
    d.n_strata_ = static_cast<int>(d.stratum_labels_.size());
    std::vector<int> cnt(d.n_strata_, 0), tr(d.n_strata_, 0);
    for (int i = 0; i < n; ++i) {
      ++cnt[d.stratum_[i] - 1];
      if (z[i] == 1.0) ++tr[d.stratum_[i] - 1];
    }
    for (int s = 0; s < d.n_strata_; ++s) {
      if (cnt[s] < 2 || tr[s] == 0 || tr[s] == cnt[s])
        throw Error(ErrorCode::DegenerateStratum,
                    "stratum " + d.stratum_labels_[s] +
                        " needs >= 2 units and both treatment arms");
    }
  }

  if (user_weights.size() > 0) {
    if (user_weights.size() != n)
      throw Error(ErrorCode::InvalidSpec, "weights length differs from n");
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(user_weights[i]) || user_weights[i] <= 0.0)
        throw Error(ErrorCode::NonPositiveWeight,
                    "weight at row " + std::to_string(i) + " must be a positive finite value");
    }
  }

  d.z_ = std::move(z);
  d.y_ = std::move(y);
  d.x_ = std::move(x);
  d.user_weights_ = std::move(user_weights);
  return d;
}

StudyData StudyData::stratum_slice(int s) const {
  if (!has_strata() || s < 1 || s > n_strata_)
    throw Error(ErrorCode::InvalidSpec, "stratum_slice: bad stratum id");
  std::vector<int> rows;
  for (int i = 0; i < n(); ++i)
    if (stratum_[i] == s) rows.push_back(i);
  const int m = static_cast<int>(rows.size());
  Vector z(m);
  Matrix y(m, L());
  Matrix x(m, K());
  Vector w(has_user_weights() ? m : 0);
  for (int i = 0; i < m; ++i) {
    z[i] = z_[rows[i]];
    y.row(i) = y_.row(rows[i]);
    if (K() > 0) x.row(i) = x_.row(rows[i]);
    if (has_user_weights()) w[i] = user_weights_[rows[i]];
  }
  try {
    return from_columns(std::move(z), std::move(y), std::move(x), {}, std::move(w), roles_);
  } catch (const Error& e) {
    throw Error(e.code(),
                "stratum " + stratum_labels_[s - 1] + ": " + std::string(e.what()));
  }
}

namespace {

// RFC-4180 style row split: quoted fields, embedded commas/quotes, CRLF
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(std::move(field));
  return out;
}

double parse_double(const std::string& s, int row, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << "cannot parse '" << s << "' as a number at row " << row << ", column '" << col
        << "'";
    throw Error(ErrorCode::NonFiniteValue, msg.str());
  }
}

int parse_stratum(const std::string& s, int row, const std::string& col) {
  const double v = parse_double(s, row, col);
  const int iv = static_cast<int>(std::lround(v));
  if (static_cast<double>(iv) != v)
    throw Error(ErrorCode::NonFiniteValue,
                "stratum label '" + s + "' at row " + std::to_string(row) +
                    " is not an integer");
  return iv;
}

}  // namespace

StudyData load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingColumn, "cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::TooFewRows, "empty file: " + path);
  const std::vector<std::string> header = split_csv_row(line);

  auto col_index = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in header");
    return static_cast<int>(it - header.begin());
  };

  if (roles.treatment.empty())
    throw Error(ErrorCode::MissingColumn, "a treatment column must be named");
  if (roles.outcomes.empty())
    throw Error(ErrorCode::MissingColumn, "at least one outcome column must be named");

  const int zi = col_index(roles.treatment);
  std::vector<int> yi, xi;
  for (const auto& c : roles.outcomes) yi.push_back(col_index(c));
  for (const auto& c : roles.covariates) xi.push_back(col_index(c));
  const int si = roles.stratum.empty() ? -1 : col_index(roles.stratum);
  const int wi = roles.weights.empty() ? -1 : col_index(roles.weights);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_row(line));
    if (rows.back().size() != header.size())
      throw Error(ErrorCode::NonFiniteValue,
                  "row " + std::to_string(rows.size() - 1) + " has " +
                      std::to_string(rows.back().size()) + " fields, header has " +
                      std::to_string(header.size()));
  }

  const int n = static_cast<int>(rows.size());
  const int l = static_cast<int>(yi.size());
  const int k = static_cast<int>(xi.size());
  Vector z(n);
  Matrix y(n, l);
  Matrix x(n, k);
  std::vector<int> stratum;
  Vector w(wi >= 0 ? n : 0);
  if (si >= 0) stratum.resize(n);
  for (int i = 0; i < n; ++i) {
    z[i] = parse_double(rows[i][zi], i, roles.treatment);
    for (int j = 0; j < l; ++j) y(i, j) = parse_double(rows[i][yi[j]], i, roles.outcomes[j]);
    for (int j = 0; j < k; ++j) x(i, j) = parse_double(rows[i][xi[j]], i, roles.covariates[j]);
    if (si >= 0) stratum[i] = parse_stratum(rows[i][si], i, roles.stratum);
    if (wi >= 0) w[i] = parse_double(rows[i][wi], i, roles.weights);
  }
  return StudyData::from_columns(std::move(z), std::move(y), std::move(x), std::move(stratum),
                                 std::move(w), roles);
}

void write_csv(const StudyData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidSpec, "cannot open file for writing: " + path);
  const auto& r = data.roles();
  std::vector<std::string> header;
  header.push_back(r.treatment.empty() ? "z" : r.treatment);
  for (int j = 0; j < data.L(); ++j)
    header.push_back(j < static_cast<int>(r.outcomes.size()) ? r.outcomes[j]
                                                             : "y" + std::to_string(j + 1));
  for (int j = 0; j < data.K(); ++j)
    header.push_back(j < static_cast<int>(r.covariates.size()) ? r.covariates[j]
                                                               : "x" + std::to_string(j + 1));
  if (data.has_strata()) header.push_back(r.stratum.empty() ? "stratum" : r.stratum);
  if (data.has_user_weights()) header.push_back(r.weights.empty() ? "w" : r.weights);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << header[j] << (j + 1 < header.size() ? "," : "\n");

  for (int i = 0; i < data.n(); ++i) {
    out << fmt17(data.z()[i]);
    for (int j = 0; j < data.L(); ++j) out << ',' << fmt17(data.y()(i, j));
    for (int j = 0; j < data.K(); ++j) out << ',' << fmt17(data.x()(i, j));
    if (data.has_strata()) out << ',' << data.stratum_labels()[data.stratum()[i] - 1];
    if (data.has_user_weights()) out << ',' << fmt17(data.user_weights()[i]);
    out << '\n';
  }
}

}  // namespace invreg
