// SPDX-License-Identifier: Apache-2.0
// Scalar semantics shared by the host interpreter and the device executor.
// Both must produce bit-identical results, so every operation lives here.
#pragma once

#include <cmath>
#include <cstdint>

#include "loopport/error.hpp"

namespace loopport::arith {

inline std::int64_t idiv(std::int64_t a, std::int64_t b) {
  if (b == 0) throw Error(ErrorCode::RuntimeArithmetic, "integer division by zero");
  return a / b;
}

inline std::int64_t imod(std::int64_t a, std::int64_t b) {
  if (b == 0) throw Error(ErrorCode::RuntimeArithmetic, "mod with zero divisor");
  return a % b;
}

inline std::int64_t ipow(std::int64_t base, std::int64_t e) {
  if (e < 0) {
    if (base == 0) throw Error(ErrorCode::RuntimeArithmetic, "zero raised to a negative power");
    if (base == 1) return 1;
    if (base == -1) return (e % 2 == 0) ? 1 : -1;
    return 0;
  }
  std::int64_t r = 1;
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

// real ** integer by repeated squaring, as compilers do for integer exponents
inline double rpowi(double base, std::int64_t e) {
  bool inv = e < 0;
  std::uint64_t n = inv ? static_cast<std::uint64_t>(-(e + 1)) + 1 : static_cast<std::uint64_t>(e);
  double r = 1.0;
  while (n > 0) {
    if (n & 1) r *= base;
    base *= base;
    n >>= 1;
  }
  return inv ? 1.0 / r : r;
}

inline double rpow(double a, double b) { return std::pow(a, b); }
inline double rmod(double a, double b) { return std::fmod(a, b); }

// INT(): truncation toward zero
inline std::int64_t to_int(double v) {
  if (!std::isfinite(v) || std::fabs(v) > 9.2e18)
    throw Error(ErrorCode::RuntimeArithmetic, "real value out of integer range");
  return static_cast<std::int64_t>(v);
}

inline std::int32_t narrow(std::int64_t v) {
  if (v < INT32_MIN || v > INT32_MAX)
    throw Error(ErrorCode::RuntimeArithmetic, "integer value out of 32-bit range");
  return static_cast<std::int32_t>(v);
}

} // namespace loopport::arith
