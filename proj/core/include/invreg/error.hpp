#pragma once

#include <stdexcept>
#include <string>

namespace invreg {

enum class ErrorCode {
  // data validation
  MissingColumn,
  NonBinaryTreatment,
  NonFiniteValue,
  DegenerateStratum,
  TooFewRows,
  ConstantOutcome,
  NonPositiveWeight,
  InvalidSpec,
  DegenerateTreatment,
  // numerical
  RankDeficient,
  NearSingular,
  NoConvergence,
  Separation,
  IntegrationFailure,
  NegativeEigenvalue,
  ZeroVarianceX,
  StudyFailure,
};

enum class ErrorKind { Validation, Numeric };

constexpr ErrorKind kind_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingColumn:
    case ErrorCode::NonBinaryTreatment:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::DegenerateStratum:
    case ErrorCode::TooFewRows:
    case ErrorCode::ConstantOutcome:
    case ErrorCode::NonPositiveWeight:
    case ErrorCode::InvalidSpec:
    case ErrorCode::DegenerateTreatment:
      return ErrorKind::Validation;
    default:
      return ErrorKind::Numeric;
  }
}

constexpr const char* name_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DegenerateStratum: return "DegenerateStratum";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::ConstantOutcome: return "ConstantOutcome";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NearSingular: return "NearSingular";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::IntegrationFailure: return "IntegrationFailure";
    case ErrorCode::NegativeEigenvalue: return "NegativeEigenvalue";
    case ErrorCode::ZeroVarianceX: return "ZeroVarianceX";
    case ErrorCode::StudyFailure: return "StudyFailure";
  }
  return "Unknown";
}

// Every failure surfaces as one typed Error; the library never aborts on bad input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }
  ErrorKind kind() const { return kind_of(code_); }
  const char* code_name() const { return name_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace invreg
