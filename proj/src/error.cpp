// SPDX-License-Identifier: Apache-2.0
#include "loopport/error.hpp"

namespace loopport {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::LexError: return "LexError";
  case ErrorCode::ParseError: return "ParseError";
  case ErrorCode::UndeclaredSymbol: return "UndeclaredSymbol";
  case ErrorCode::UnsupportedConstruct: return "UnsupportedConstruct";
  case ErrorCode::TypeError: return "TypeError";
  case ErrorCode::UnmatchedTag: return "UnmatchedTag";
  case ErrorCode::NestedTag: return "NestedTag";
  case ErrorCode::MisplacedTag: return "MisplacedTag";
  case ErrorCode::BadTagOption: return "BadTagOption";
  case ErrorCode::NonLoopRegion: return "NonLoopRegion";
  case ErrorCode::ImperfectNest: return "ImperfectNest";
  case ErrorCode::LoweringFailed: return "LoweringFailed";
  case ErrorCode::BadShape: return "BadShape";
  case ErrorCode::UseAfterFree: return "UseAfterFree";
  case ErrorCode::BindingMismatch: return "BindingMismatch";
  case ErrorCode::OutOfBoundsAccess: return "OutOfBoundsAccess";
  case ErrorCode::EmptyDomain: return "EmptyDomain";
  case ErrorCode::RuntimeArithmetic: return "RuntimeArithmetic";
  case ErrorCode::UnknownCallee: return "UnknownCallee";
  case ErrorCode::ArityMismatch: return "ArityMismatch";
  case ErrorCode::BadHandle: return "BadHandle";
  case ErrorCode::NotSPD: return "NotSPD";
  case ErrorCode::BadProblem: return "BadProblem";
  case ErrorCode::NotConverged: return "NotConverged";
  case ErrorCode::BadConfig: return "BadConfig";
  case ErrorCode::DeviceBusy: return "DeviceBusy";
  }
  return "Unknown";
}

namespace {
std::string render(ErrorCode code, const std::string& message, int line, int column) {
  std::string out(to_string(code));
  if (line > 0) {
    out += " at line " + std::to_string(line);
    if (column > 0) out += ":" + std::to_string(column);
  }
  out += ": " + message;
  return out;
}
} // namespace

Error::Error(ErrorCode code, std::string message, int line, int column)
    : std::runtime_error(render(code, message, line, column)), code_(code), line_(line),
      column_(column), detail_(std::move(message)) {}

} // namespace loopport
