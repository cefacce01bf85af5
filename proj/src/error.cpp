// SPDX-License-Identifier: Apache-2.0
#include "covcast/error.hpp"

namespace covcast {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
  case ErrorCode::MissingColumn: return "MissingColumn";
  case ErrorCode::BadDate: return "BadDate";
  case ErrorCode::BadCount: return "BadCount";
  case ErrorCode::UnknownCountry: return "UnknownCountry";
  case ErrorCode::EmptyRange: return "EmptyRange";
  case ErrorCode::TooShort: return "TooShort";
  case ErrorCode::InvalidFraction: return "InvalidFraction";
  case ErrorCode::ConstantSeries: return "ConstantSeries";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::LengthMismatch: return "LengthMismatch";
  case ErrorCode::EmptyInput: return "EmptyInput";
  case ErrorCode::NonDeterministicForward: return "NonDeterministicForward";
  case ErrorCode::IndivisibleWindow: return "IndivisibleWindow";
  case ErrorCode::InvalidConfig: return "InvalidConfig";
  case ErrorCode::MissingForwardCache: return "MissingForwardCache";
  case ErrorCode::BadModelFile: return "BadModelFile";
  case ErrorCode::DivergedLoss: return "DivergedLoss";
  case ErrorCode::SeriesTooShort: return "SeriesTooShort";
  case ErrorCode::NegativeValue: return "NegativeValue";
  case ErrorCode::AllActualsZero: return "AllActualsZero";
  case ErrorCode::ConstantActuals: return "ConstantActuals";
  case ErrorCode::MissingMetric: return "MissingMetric";
  case ErrorCode::DegenerateTable: return "DegenerateTable";
  case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
  case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
  case ErrorCode::UnknownKey: return "UnknownKey";
  case ErrorCode::InvalidValue: return "InvalidValue";
  case ErrorCode::MissingDataPath: return "MissingDataPath";
  case ErrorCode::SchemaMismatch: return "SchemaMismatch";
  case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

} // namespace covcast
