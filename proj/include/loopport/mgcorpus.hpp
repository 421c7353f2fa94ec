// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loopport/error.hpp"
#include "loopport/hostexec.hpp"
#include "loopport/vdevice.hpp"

namespace loopport::mg {

/// Directions of the 9-point stencil, in storage order (third index 1..9).
enum Dir { SW, S, SE, W, O, E, NW, N, NE };
inline int dir_di(int k) { return k % 3 - 1; }
inline int dir_dj(int k) { return k / 3 - 1; }
inline int opposite(int k) { return 8 - k; }

/// Interpolation weight slots (third index 1..8).
enum Weight { LNE, LA, LNW, LR, LL, LSE, LB, LSW };

/// Per-point 9-point stencil on the padded grid (1:nx+2, 1:ny+2, 1:9),
/// stored column-major like the corpus arrays.
struct StencilOperator {
  std::int64_t nx = 0, ny = 0;
  std::vector<double> coef;

  StencilOperator() = default;
  StencilOperator(std::int64_t nx, std::int64_t ny);
  std::int64_t X() const { return nx + 2; }
  std::int64_t Y() const { return ny + 2; }
  /// 1-based padded indices.
  double& at(std::int64_t i, std::int64_t j, int k) {
    return coef[static_cast<std::size_t>((k * Y() + (j - 1)) * X() + (i - 1))];
  }
  double at(std::int64_t i, std::int64_t j, int k) const {
    return coef[static_cast<std::size_t>((k * Y() + (j - 1)) * X() + (i - 1))];
  }
};

/// Largest |a(p,d) - a(p+d,opposite(d))| over the padded grid.
double symmetry_defect(const StencilOperator& a);

/// Weights on the coarse grid (1:Nxc, 1:Nyc, 1:8), Nxc = ncx + 2.
struct InterpStencil {
  std::int64_t Nxc = 0, Nyc = 0;
  std::vector<double> w;

  InterpStencil() = default;
  InterpStencil(std::int64_t Nxc, std::int64_t Nyc);
  double& at(std::int64_t ic, std::int64_t jc, int l) {
    return w[static_cast<std::size_t>((l * Nyc + (jc - 1)) * Nxc + (ic - 1))];
  }
  double at(std::int64_t ic, std::int64_t jc, int l) const {
    return w[static_cast<std::size_t>((l * Nyc + (jc - 1)) * Nxc + (ic - 1))];
  }
};

enum class InterpKind { Bilinear, Collapsed };

struct ProblemSpec {
  std::int64_t n = 0;
  /// Diffusion in x and y; equal for isotropic problems. Arguments are (x, y).
  std::function<double(double, double)> dx, dy;
  std::function<double(double, double)> f;
};

ProblemSpec poisson(std::int64_t n);
/// D = 1 for x < 1/2 and 10 otherwise.
ProblemSpec piecewise(std::int64_t n);

struct Problem {
  StencilOperator op;
  std::vector<double> rhs; // padded grid, zero ghost ring
};

/// 5-point finite differences scaled by h^2, harmonic averages of D at edges.
/// Throws BadProblem for n < 3 or non-positive D.
Problem build_problem(const ProblemSpec& spec);

/// Interior extent of the next coarser level; throws BadProblem when it would not nest.
std::int64_t coarsen(std::int64_t n);

InterpStencil bilinear_interp(std::int64_t ncx, std::int64_t ncy);
/// Operator-collapsed weights for variable coefficients.
InterpStencil collapsed_interp(const StencilOperator& fine);
/// Stencil-wise restrict(A(interpolate)) with restriction the transpose of
/// the interpolation the interp_add kernel applies.
StencilOperator galerkin(const StencilOperator& fine, const InterpStencil& ci);
/// Dense matrix over the padded grid, ghost rows set to the identity.
std::vector<double> dense_padded(const StencilOperator& a);

/// All corpus sources, translated.
host::Program load_corpus(const std::filesystem::path& dir = LOOPPORT_CORPUS_DIR);

struct MgOptions {
  int nu1 = 1;
  int nu2 = 1;
  std::int64_t threshold = 3;
  InterpKind interp = InterpKind::Bilinear;
};

struct Level {
  std::int64_t n = 0;
  StencilOperator op;
  vdev::BufferId so = 0, x = 0, b = 0, r = 0;
  vdev::BufferId ci = 0; // weights to the next finer level; 0 on level 0
};

class NotConvergedError : public Error {
public:
  NotConvergedError(std::vector<double> history, int maxiter);
  const std::vector<double>& history() const { return history_; }

private:
  std::vector<double> history_;
};

struct SolveResult {
  std::vector<double> x;       // padded grid
  std::vector<double> history; // relative residual after each cycle
};

/// Grid hierarchy whose every grid step runs through the translated corpus.
class Multigrid {
public:
  /// Builds levels down to the threshold and factors the coarsest operator.
  Multigrid(host::Interpreter& interp, const StencilOperator& fine, MgOptions opt = {});

  const std::vector<Level>& levels() const { return levels_; }
  const MgOptions& options() const { return opt_; }

  void set_rhs(const std::vector<double>& b);
  void set_solution(const std::vector<double>& x);
  std::vector<double> solution();
  /// One V-cycle starting at `level`.
  void vcycle(std::size_t level = 0);
  /// ||b - A x|| / ||b|| of level 0, evaluated by the residual_norm corpus routine.
  double relative_residual();
  /// Iterates V-cycles; throws NotConvergedError after maxiter.
  SolveResult solve(const std::vector<double>& b, double tol, int maxiter, const std::vector<double>* x0 = nullptr);

  /// Kernel launches of one V-cycle on every non-coarsest level.
  static std::uint64_t launches_per_level(const MgOptions& opt) { return 4u * static_cast<std::uint64_t>(opt.nu1 + opt.nu2) + 4u; }

private:
  void sweep(const Level& l, int times);
  double norm(vdev::BufferId v, std::int64_t count);
  static std::string scope(std::size_t level) { return "level" + std::to_string(level); }

  host::Interpreter& in_;
  vdev::Device& dev_;
  MgOptions opt_;
  std::vector<Level> levels_;
  vdev::BufferId lfac_ = 0;
  double bnorm_ = 0.0;
};

struct KernelTotals {
  std::uint64_t launches = 0, threads = 0;
  bool operator==(const KernelTotals&) const = default;
};

struct ReportRow {
  std::string label;
  std::uint64_t launches = 0, threads = 0, h2d_bytes = 0, d2h_bytes = 0, external_calls = 0;
  std::map<std::string, KernelTotals> kernels;
  bool operator==(const ReportRow&) const = default;
};

struct Report {
  std::vector<ReportRow> levels; // "levelN" scopes, by N
  ReportRow total;               // sum of the level rows
  std::vector<ReportRow> other;  // remaining scopes (monitor, setup, ...)
};

Report make_report(const vdev::TransferLedger& ledger);
nlohmann::json to_json(const Report& r);
std::string to_text(const Report& r);

} // namespace loopport::mg
