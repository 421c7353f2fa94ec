// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loopport {

enum class ErrorCode {
  LexError,
  ParseError,
  UndeclaredSymbol,
  UnsupportedConstruct,
  TypeError,
  UnmatchedTag,
  NestedTag,
  MisplacedTag,
  BadTagOption,
  NonLoopRegion,
  ImperfectNest,
  LoweringFailed,
  BadShape,
  UseAfterFree,
  BindingMismatch,
  OutOfBoundsAccess,
  EmptyDomain,
  RuntimeArithmetic,
  UnknownCallee,
  ArityMismatch,
  BadHandle,
  NotSPD,
  BadProblem,
  NotConverged,
  BadConfig,
  DeviceBusy,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the toolchain. `line` is the
/// 1-based source line when the error is anchored in legacy source, else 0.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string message, int line = 0, int column = 0);

  ErrorCode code() const noexcept { return code_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  int line_;
  int column_;
  std::string detail_;
};

} // namespace loopport
