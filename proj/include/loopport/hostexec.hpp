// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "loopport/loopir.hpp"
#include "loopport/parser.hpp"
#include "loopport/regions.hpp"
#include "loopport/vdevice.hpp"

namespace loopport::host {

/// Storage of one scalar variable. Shared between caller and callee when
/// passed by reference.
struct Cell {
  frontend::BaseType type = frontend::BaseType::Integer;
  std::int64_t i = 0;
  double r = 0.0;

  static std::shared_ptr<Cell> integer(std::int64_t v);
  static std::shared_ptr<Cell> real(double v);
};
using CellPtr = std::shared_ptr<Cell>;

/// An array as seen by one activation: a buffer plus the declared bounds.
struct ArrayBinding {
  vdev::BufferId buffer = 0;
  vdev::Shape view;
  vdev::ElemType type = vdev::ElemType::Real64;
};

/// Actual argument of a CALL.
using Arg = std::variant<CellPtr, vdev::BufferId>;

class ExternalRegistry;

struct Environment {
  std::map<std::string, CellPtr> scalars;     // lowercased
  std::map<std::string, ArrayBinding> arrays; // lowercased
  const ExternalRegistry* registry = nullptr;
  std::vector<vdev::BufferId> temporaries;    // local arrays, freed on exit
};

/// One legacy subroutine after region splitting and lowering.
struct TranslatedSubroutine {
  frontend::ParsedUnit unit;
  std::vector<regions::TaggedRegion> regions;
  /// Parallel regions map to their lowered kernel; host regions to null.
  std::vector<std::shared_ptr<const ir::LoopKernel>> kernels;
};

class Program {
public:
  /// Parses, splits and lowers every subroutine. Throws the first error,
  /// LoweringError for rejected kernels.
  static Program translate(const std::vector<std::string>& sources);
  void add_source(const std::string& source);

  const TranslatedSubroutine* find(const std::string& name) const;
  std::vector<std::string> names() const;
  /// All kernels in subroutine order.
  std::vector<std::shared_ptr<const ir::LoopKernel>> kernels() const;

private:
  std::map<std::string, std::shared_ptr<const TranslatedSubroutine>> subs_;
  std::vector<std::string> order_;
};

/// Runtime object an integer handle refers to.
struct RuntimeContext {
  std::string name;
  std::int64_t rank = 0;
  std::int64_t size = 1;
};

class HandleTable {
public:
  HandleTable();
  /// Handle 0 is the default context.
  std::int64_t issue(std::shared_ptr<RuntimeContext> ctx);
  /// Throws BadHandle.
  std::shared_ptr<RuntimeContext> convert(std::int64_t raw) const;

private:
  std::map<std::int64_t, std::shared_ptr<RuntimeContext>> table_;
  std::int64_t next_ = 1;
};

enum class ParamKind { Integer, Real, Array, Handle };

class Interpreter;

/// Arguments of one external call after checking and handle conversion.
struct ExternalCall {
  Interpreter& interp;
  vdev::Device& device;
  vdev::Side side; // where the external operates
  const std::vector<Arg>& args;
  std::vector<std::shared_ptr<RuntimeContext>> handles; // per position; null unless Handle

  std::int64_t integer(std::size_t k) const;
  double real(std::size_t k) const;
  void set_integer(std::size_t k, std::int64_t v) const;
  void set_real(std::size_t k, double v) const;
  vdev::BufferId buffer(std::size_t k) const;
  /// Payload of buffer argument k after a residency access on `side`.
  vdev::Payload& data(std::size_t k, vdev::Mode mode) const;
};

struct ExternalSpec {
  std::vector<ParamKind> params;
  std::function<void(const ExternalCall&)> impl;
};

class ExternalRegistry {
public:
  void add(const std::string& name, ExternalSpec spec);
  const ExternalSpec* find(const std::string& name) const;
  std::vector<std::string> names() const;

private:
  std::map<std::string, ExternalSpec> table_;
};

/// norm2, cholesky_factor, cholesky_solve, ctx_rank, ctx_size.
void register_builtin_externals(ExternalRegistry& reg);

enum class ExecMode {
  Device,     // parallel regions launch on the virtual device
  Sequential, // everything interpreted on the host; no launches
};

class Interpreter {
public:
  Interpreter(const Program& program, const ExternalRegistry& registry, vdev::Device& device,
              ExecMode mode = ExecMode::Device);

  /// Fresh activation: dummies bound by reference, locals zeroed.
  Environment bind(const TranslatedSubroutine& sub, const std::vector<Arg>& args);
  /// Executes region `region` of `sub` in `env`. Parallel regions launch in
  /// device mode and are interpreted in sequential mode.
  Environment interpret(const TranslatedSubroutine& sub, std::size_t region, Environment env);

  /// Translated subroutine or registered external. Throws UnknownCallee,
  /// ArityMismatch, BindingMismatch.
  void call(const std::string& name, const std::vector<Arg>& args);

  std::shared_ptr<RuntimeContext> convert_handle(std::int64_t raw) const { return handles_.convert(raw); }
  std::int64_t issue_handle(std::shared_ptr<RuntimeContext> ctx) { return handles_.issue(std::move(ctx)); }

  vdev::Device& device() { return device_; }
  ExecMode mode() const { return mode_; }
  const Program& program() const { return program_; }
  void set_schedule(vdev::Schedule s) { schedule_ = s; }
  /// Element type for buffers of the given declared type.
  static vdev::ElemType elem_type(frontend::BaseType t);

private:
  friend class Exec;

  void launch(const std::shared_ptr<const ir::LoopKernel>& k, const Environment& env);
  void run_subroutine(const TranslatedSubroutine& sub, const std::vector<Arg>& args);
  void call_external(const ExternalSpec& spec, const std::vector<Arg>& args);

  const Program& program_;
  const ExternalRegistry& registry_;
  vdev::Device& device_;
  ExecMode mode_;
  HandleTable handles_;
  vdev::Schedule schedule_ = vdev::Schedule::natural();
};

} // namespace loopport::host
