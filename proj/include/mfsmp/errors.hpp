// Copyright 2026 The mfsmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfsmp {

enum class ErrorCode {
  EmptyInput,
  NonFiniteValue,
  AlphaOutOfRange,
  OrderOutOfRange,
  SupportTooLarge,
  MismatchedSupport,
  InvalidDistribution,
  ControlOutOfBox,
  EmptyMeasure,
  UnknownFunctional,
  NormZero,
  InvalidDirection,
  InvalidModel,
  NonFiniteResult,
  BlowUp,
  PolicyOutOfBox,
  GridMismatch,
  InvalidGrid,
  NoConvergence,
  ReferenceNotConverged,
  TooFewParticles,
  MissingAux,
  Overflow,
  DegenerateSample,
  ZeroMassPoint,
  RegressionFailure,
  NegativeV,
  NonFiniteDriver,
  RiccatiBlowup,
  InvalidParams,
  ConfigError,
  IOFailure,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::OrderOutOfRange: return "OrderOutOfRange";
    case ErrorCode::SupportTooLarge: return "SupportTooLarge";
    case ErrorCode::MismatchedSupport: return "MismatchedSupport";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::ControlOutOfBox: return "ControlOutOfBox";
    case ErrorCode::EmptyMeasure: return "EmptyMeasure";
    case ErrorCode::UnknownFunctional: return "UnknownFunctional";
    case ErrorCode::NormZero: return "NormZero";
    case ErrorCode::InvalidDirection: return "InvalidDirection";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::NonFiniteResult: return "NonFiniteResult";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::PolicyOutOfBox: return "PolicyOutOfBox";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ReferenceNotConverged: return "ReferenceNotConverged";
    case ErrorCode::TooFewParticles: return "TooFewParticles";
    case ErrorCode::MissingAux: return "MissingAux";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::ZeroMassPoint: return "ZeroMassPoint";
    case ErrorCode::RegressionFailure: return "RegressionFailure";
    case ErrorCode::NegativeV: return "NegativeV";
    case ErrorCode::NonFiniteDriver: return "NonFiniteDriver";
    case ErrorCode::RiccatiBlowup: return "RiccatiBlowup";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

/// Numerical failures (blow-up, non-convergence, non-finite values) as
/// opposed to usage errors. The CLI maps these to a distinct exit code.
inline constexpr bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteResult:
    case ErrorCode::BlowUp:
    case ErrorCode::NoConvergence:
    case ErrorCode::ReferenceNotConverged:
    case ErrorCode::Overflow:
    case ErrorCode::RegressionFailure:
    case ErrorCode::NegativeV:
    case ErrorCode::NonFiniteDriver:
    case ErrorCode::RiccatiBlowup:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mfsmp
