// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "loopport/ast.hpp"
#include "loopport/error.hpp"
#include "loopport/regions.hpp"
#include "loopport/symbols.hpp"

namespace loopport::ir {

using frontend::BaseType;
using frontend::ExprPtr;

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string code; // LOOP_CARRIED_SCALAR, WRITE_OVERLAP, DYNAMIC_INDEX, ...
  int line = 0;
  std::string message;
  std::optional<std::string> hint;
};

/// "error LOOP_CARRIED_SCALAR at line 9: ..." plus an indented hint line.
std::string format(const Diagnostic& d);
bool has_errors(const std::vector<Diagnostic>& diags);

/// Thrown by lower_region when the region violates kernel rules.
class LoweringError : public Error {
public:
  explicit LoweringError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diags_; }

private:
  std::vector<Diagnostic> diags_;
};

struct Instr;
using InstrList = std::vector<Instr>;

struct DefineScalar {
  std::string name;
  ExprPtr value;
};
struct StoreArray {
  std::string array;
  std::vector<ExprPtr> indices;
  ExprPtr value;
};
struct Branch {
  ExprPtr cond;
  InstrList then_body;
  InstrList else_body;
};
/// A domain that stays a sequential loop inside each thread.
struct SeqLoop {
  std::string var;
  ExprPtr lower;
  ExprPtr upper;
  InstrList body;
};

struct Instr {
  std::variant<DefineScalar, StoreArray, Branch, SeqLoop> node;
  int line = 0;
  template <class T> const T* as() const { return std::get_if<T>(&node); }
};

struct Domain {
  std::string var;
  ExprPtr lower;
  ExprPtr upper;
  int line = 0;
  /// Private-scalar definitions between this loop header and the next one.
  InstrList prologue;
};

struct KernelParam {
  std::string name;
  bool is_array = false;
  BaseType type = BaseType::Real64;
  std::vector<frontend::DimSpec> bounds; // declared, empty for scalars
  frontend::Intent intent = frontend::Intent::None;
  int rank() const { return static_cast<int>(bounds.size()); }
};

struct KernelConst {
  std::string name;
  frontend::ConstValue value;
};

struct PrivateScalar {
  std::string name;
  BaseType type = BaseType::Integer;
};

struct LoopKernel {
  std::string name;
  std::vector<Domain> domains; // outermost first
  int grid_axes = 0;           // leading domains mapped to grid axes; 0 until map_grid
  InstrList body;              // innermost loop body
  std::vector<KernelParam> params;
  std::vector<KernelConst> constants;
  std::vector<PrivateScalar> privates;
  std::vector<regions::Assumption> assumptions;
  std::vector<Diagnostic> warnings;
  int first_line = 0;
  int last_line = 0;

  const KernelParam* param(std::string_view name) const;
  /// Arrays read / written anywhere in the body, lowercased.
  std::vector<std::string> loaded_arrays() const;
  std::vector<std::string> stored_arrays() const;
};

/// Scalar accumulators carried between iterations, overlapping stores and
/// load/store conflicts between iterations. Never throws for malformed
/// nests (lower_region reports those).
std::vector<Diagnostic> detect_loop_carried_deps(const regions::TaggedRegion& region,
                                                 const frontend::SymbolTable& syms);

/// Throws LoweringError with all error diagnostics, or Error(NonLoopRegion),
/// Error(ImperfectNest), Error(BadTagOption) for unusable assumptions.
LoopKernel lower_region(const regions::TaggedRegion& region, const frontend::SymbolTable& syms,
                        std::string name = "kernel");

/// Up to two outermost domains become grid axes. Adds DYNAMIC_BOUNDS warnings
/// for grid extents not provably >= 1.
LoopKernel map_grid(LoopKernel kernel);

/// Per-thread instruction sequence after grid mapping: prologues of grid
/// domains followed by the remaining domains as nested SeqLoops.
InstrList thread_program(const LoopKernel& kernel);

enum class BoundsStatus { Verified, Unknown };
BoundsStatus check_bounds_static(const LoopKernel& kernel);

std::string emit_kernel_text(const LoopKernel& kernel);

/// Evaluates an integer expression whose names resolve through `lookup`
/// (lowercased name -> value). nullopt when a name is unknown or the
/// expression is not integer-valued.
std::optional<std::int64_t>
eval_int(const frontend::Expr& e,
         const std::function<std::optional<std::int64_t>(const std::string&)>& lookup);

/// Expression text without spaces, as used in dumps and hints.
std::string compact(const frontend::Expr& e);

} // namespace loopport::ir
