// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Error type shared by every covcast module.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covcast {

enum class ErrorCode {
  // series-io
  MissingColumn,
  BadDate,
  BadCount,
  UnknownCountry,
  EmptyRange,
  TooShort,
  InvalidFraction,
  ConstantSeries,
  // nn-core
  ShapeMismatch,
  LengthMismatch,
  EmptyInput,
  NonDeterministicForward,
  // recurrent-cells
  IndivisibleWindow,
  InvalidConfig,
  MissingForwardCache,
  BadModelFile,
  // forecast-engine
  DivergedLoss,
  SeriesTooShort,
  // eval-stats
  NegativeValue,
  AllActualsZero,
  ConstantActuals,
  MissingMetric,
  DegenerateTable,
  DegenerateDenominator,
  ConvergenceFailure,
  // bench-cli
  UnknownKey,
  InvalidValue,
  MissingDataPath,
  SchemaMismatch,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace covcast
