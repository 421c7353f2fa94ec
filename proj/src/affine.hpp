// SPDX-License-Identifier: Apache-2.0
// Affine forms over domain variables and symbolic integer parameters.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "loopport/ast.hpp"
#include "loopport/regions.hpp"
#include "loopport/symbols.hpp"

namespace loopport::ir::detail {

struct Affine {
  std::map<std::string, std::int64_t> terms; // lowercased name -> coefficient, no zeros
  std::int64_t c = 0;

  bool is_const() const { return terms.empty(); }
  std::int64_t coef(const std::string& name) const {
    auto it = terms.find(name);
    return it == terms.end() ? 0 : it->second;
  }
  void add(const Affine& o, std::int64_t scale = 1);
  bool same_terms(const Affine& o) const { return terms == o.terms; }
};

struct AffineContext {
  std::map<std::string, std::int64_t> int_consts;        // lowercased
  std::set<std::string> int_params;                      // symbolic integer scalars
  std::set<std::string> domain_vars;                     // lowercased
  std::map<std::string, std::optional<Affine>> privates; // nullopt: not substitutable
};

/// Integer PARAMETERs as constants, every other integer scalar as symbolic.
AffineContext context_from(const frontend::SymbolTable& syms);

std::optional<Affine> to_affine(const frontend::Expr& e, const AffineContext& ctx);
inline std::optional<Affine> to_affine(const frontend::ExprPtr& e, const AffineContext& ctx) {
  return e ? to_affine(*e, ctx) : std::nullopt;
}

struct Interval {
  std::optional<std::int64_t> lo, hi;
};
using Ranges = std::map<std::string, Interval>;

/// Bounds implied by the assumptions; an infeasible combination is ignored.
Ranges assumption_ranges(const std::vector<regions::Assumption>& as);

/// Extremes of an affine form over symbolic parameters only.
std::optional<std::int64_t> max_over(const Affine& a, const Ranges& r);
std::optional<std::int64_t> min_over(const Affine& a, const Ranges& r);

/// Rank of an integer matrix given as rows.
int matrix_rank(const std::vector<std::vector<std::int64_t>>& rows);

} // namespace loopport::ir::detail
