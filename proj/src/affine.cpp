// SPDX-License-Identifier: Apache-2.0
#include "affine.hpp"

#include <cmath>

namespace loopport::ir::detail {

using namespace frontend;

void Affine::add(const Affine& o, std::int64_t scale) {
  c += scale * o.c;
  for (const auto& [k, v] : o.terms) {
    auto& t = terms[k];
    t += scale * v;
    if (t == 0) terms.erase(k);
  }
}

namespace {
Affine scaled(Affine a, std::int64_t s) {
  Affine out;
  out.add(a, s);
  return out;
}
} // namespace

std::optional<Affine> to_affine(const Expr& e, const AffineContext& ctx) {
  if (e.type != ValueType::Integer) return std::nullopt;
  if (auto* lit = e.as<IntLit>()) {
    Affine a;
    a.c = lit->value;
    return a;
  }
  if (auto* s = e.as<ScalarRef>()) {
    std::string name = lower(s->name);
    if (ctx.domain_vars.count(name)) {
      Affine a;
      a.terms[name] = 1;
      return a;
    }
    if (auto it = ctx.privates.find(name); it != ctx.privates.end()) return it->second;
    if (auto k = ctx.int_consts.find(name); k != ctx.int_consts.end()) {
      Affine a;
      a.c = k->second;
      return a;
    }
    if (!ctx.int_params.count(name)) return std::nullopt;
    Affine a;
    a.terms[name] = 1;
    return a;
  }
  if (auto* u = e.as<Unary>()) {
    auto v = to_affine(u->operand, ctx);
    if (!v || u->op == UnaryOp::Not) return std::nullopt;
    return u->op == UnaryOp::Neg ? scaled(*v, -1) : *v;
  }
  if (auto* b = e.as<Binary>()) {
    auto l = to_affine(b->lhs, ctx);
    if (!l) return std::nullopt;
    auto r = to_affine(b->rhs, ctx);
    if (!r) return std::nullopt;
    switch (b->op) {
    case BinaryOp::Add: l->add(*r); return l;
    case BinaryOp::Sub: l->add(*r, -1); return l;
    case BinaryOp::Mul:
      if (l->is_const()) return scaled(*r, l->c);
      if (r->is_const()) return scaled(*l, r->c);
      return std::nullopt;
    case BinaryOp::Div:
      if (l->is_const() && r->is_const() && r->c != 0) {
        Affine a;
        a.c = l->c / r->c;
        return a;
      }
      return std::nullopt;
    default: return std::nullopt;
    }
  }
  return std::nullopt;
}

AffineContext context_from(const SymbolTable& syms) {
  AffineContext ctx;
  for (const Symbol* s : syms.ordered()) {
    if (s->kind != SymbolKind::Scalar || s->type != BaseType::Integer) continue;
    if (auto k = syms.int_constant(s->name)) ctx.int_consts[lower(s->name)] = *k;
    else if (!s->constant) ctx.int_params.insert(lower(s->name));
  }
  return ctx;
}

Ranges assumption_ranges(const std::vector<regions::Assumption>& as) {
  Ranges r;
  for (const auto& a : as) {
    auto& iv = r[lower(a.variable)];
    auto raise = [&](std::int64_t v) { iv.lo = iv.lo ? std::max(*iv.lo, v) : v; };
    auto cap = [&](std::int64_t v) { iv.hi = iv.hi ? std::min(*iv.hi, v) : v; };
    switch (a.relation) {
    case regions::Relation::Ge: raise(a.bound); break;
    case regions::Relation::Le: cap(a.bound); break;
    case regions::Relation::Eq: raise(a.bound); cap(a.bound); break;
    }
  }
  return r;
}

std::optional<std::int64_t> max_over(const Affine& a, const Ranges& r) {
  std::int64_t v = a.c;
  for (const auto& [name, k] : a.terms) {
    auto it = r.find(name);
    if (it == r.end()) return std::nullopt;
    const auto& bound = k > 0 ? it->second.hi : it->second.lo;
    if (!bound) return std::nullopt;
    v += k * *bound;
  }
  return v;
}

std::optional<std::int64_t> min_over(const Affine& a, const Ranges& r) {
  Affine neg;
  neg.add(a, -1);
  auto m = max_over(neg, r);
  if (!m) return std::nullopt;
  return -*m;
}

int matrix_rank(const std::vector<std::vector<std::int64_t>>& rows) {
  if (rows.empty()) return 0;
  std::size_t ncol = rows.front().size();
  std::vector<std::vector<double>> m;
  for (const auto& r : rows) m.emplace_back(r.begin(), r.end());
  int rank = 0;
  for (std::size_t col = 0; col < ncol && rank < static_cast<int>(m.size()); ++col) {
    std::size_t piv = rank;
    for (std::size_t i = rank; i < m.size(); ++i)
      if (std::abs(m[i][col]) > std::abs(m[piv][col])) piv = i;
    if (std::abs(m[piv][col]) < 1e-9) continue;
    std::swap(m[piv], m[rank]);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (i == static_cast<std::size_t>(rank)) continue;
      double f = m[i][col] / m[rank][col];
      for (std::size_t j = col; j < ncol; ++j) m[i][j] -= f * m[rank][j];
    }
    ++rank;
  }
  return rank;
}

} // namespace loopport::ir::detail
