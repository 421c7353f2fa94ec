// SPDX-License-Identifier: Apache-2.0
#include "loopport/loopir.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "affine.hpp"
#include "loopport/detail/arith.hpp"

namespace loopport::ir {

using namespace frontend;
using detail::Affine;
using detail::AffineContext;

std::string format(const Diagnostic& d) {
  std::string s = d.severity == Severity::Error ? "error " : "warning ";
  s += d.code;
  if (d.line > 0) s += " at line " + std::to_string(d.line);
  s += ": " + d.message;
  if (d.hint) s += "\n  hint: " + *d.hint;
  return s;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

namespace {

std::string summarize(const std::vector<Diagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) {
    if (d.severity != Severity::Error) continue;
    if (!s.empty()) s += "; ";
    s += d.code + ": " + d.message;
  }
  return s.empty() ? "lowering failed" : s;
}

int first_error_line(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::Error) return d.line;
  return 0;
}

} // namespace

LoweringError::LoweringError(std::vector<Diagnostic> diags)
    : Error(ErrorCode::LoweringFailed, summarize(diags), first_error_line(diags)),
      diags_(std::move(diags)) {}

std::optional<std::int64_t>
eval_int(const Expr& e,
         const std::function<std::optional<std::int64_t>(const std::string&)>& lookup) {
  if (e.type != ValueType::Integer) return std::nullopt;
  if (auto* i = e.as<IntLit>()) return i->value;
  if (auto* s = e.as<ScalarRef>()) return lookup(lower(s->name));
  if (auto* u = e.as<Unary>()) {
    auto v = eval_int(*u->operand, lookup);
    if (!v || u->op == UnaryOp::Not) return std::nullopt;
    return u->op == UnaryOp::Neg ? -*v : *v;
  }
  if (auto* b = e.as<Binary>()) {
    auto l = eval_int(*b->lhs, lookup);
    auto r = eval_int(*b->rhs, lookup);
    if (!l || !r) return std::nullopt;
    switch (b->op) {
    case BinaryOp::Add: return *l + *r;
    case BinaryOp::Sub: return *l - *r;
    case BinaryOp::Mul: return *l * *r;
    case BinaryOp::Div: return arith::idiv(*l, *r);
    case BinaryOp::Pow: return arith::ipow(*l, *r);
    default: return std::nullopt;
    }
  }
  if (auto* c = e.as<IntrinsicCall>()) {
    std::vector<std::int64_t> args;
    for (const auto& a : c->args) {
      auto v = eval_int(*a, lookup);
      if (!v) return std::nullopt;
      args.push_back(*v);
    }
    if (c->name == "mod" && args.size() == 2) return arith::imod(args[0], args[1]);
    if (c->name == "abs" && args.size() == 1) return args[0] < 0 ? -args[0] : args[0];
    if ((c->name == "min" || c->name == "max") && !args.empty()) {
      std::int64_t m = args[0];
      for (auto v : args) m = c->name == "min" ? std::min(m, v) : std::max(m, v);
      return m;
    }
    if (c->name == "int" && args.size() == 1) return args[0];
  }
  return std::nullopt;
}

std::string compact(const Expr& e) {
  std::string s = pretty_print(e);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  return s;
}

const KernelParam* LoopKernel::param(std::string_view n) const {
  std::string key = lower(n);
  for (const auto& p : params)
    if (lower(p.name) == key) return &p;
  return nullptr;
}

namespace {

// ---- generic traversal ------------------------------------------------------

template <class Fn> void for_each_expr(const InstrList& prog, Fn&& fn) {
  for (const Instr& in : prog) {
    if (auto* d = in.as<DefineScalar>()) fn(d->value);
    else if (auto* s = in.as<StoreArray>()) {
      for (const auto& i : s->indices) fn(i);
      fn(s->value);
    } else if (auto* b = in.as<Branch>()) {
      fn(b->cond);
      for_each_expr(b->then_body, fn);
      for_each_expr(b->else_body, fn);
    } else if (auto* l = in.as<SeqLoop>()) {
      fn(l->lower);
      fn(l->upper);
      for_each_expr(l->body, fn);
    }
  }
}

template <class Fn> void for_each_store(const InstrList& prog, Fn&& fn) {
  for (const Instr& in : prog) {
    if (auto* s = in.as<StoreArray>()) fn(*s, in.line);
    else if (auto* b = in.as<Branch>()) {
      for_each_store(b->then_body, fn);
      for_each_store(b->else_body, fn);
    } else if (auto* l = in.as<SeqLoop>())
      for_each_store(l->body, fn);
  }
}

struct Access {
  std::string array; // lowercased
  std::string text;
  std::vector<ExprPtr> indices;
  bool store = false;
  int line = 0;
};

void collect_loads(const ExprPtr& e, int line, std::vector<Access>& out) {
  walk_postorder(e, [&](const ExprPtr& n) {
    if (auto* a = n->as<ArrayRef>())
      out.push_back({lower(a->name), compact(*n), a->indices, false, line});
  });
}

void collect_accesses(const InstrList& prog, std::vector<Access>& out) {
  for (const Instr& in : prog) {
    if (auto* d = in.as<DefineScalar>()) collect_loads(d->value, in.line, out);
    else if (auto* s = in.as<StoreArray>()) {
      for (const auto& i : s->indices) collect_loads(i, in.line, out);
      collect_loads(s->value, in.line, out);
      std::string text = s->array + "(";
      for (std::size_t k = 0; k < s->indices.size(); ++k)
        text += (k ? "," : "") + compact(*s->indices[k]);
      out.push_back({lower(s->array), text + ")", s->indices, true, in.line});
    } else if (auto* b = in.as<Branch>()) {
      collect_loads(b->cond, in.line, out);
      collect_accesses(b->then_body, out);
      collect_accesses(b->else_body, out);
    } else if (auto* l = in.as<SeqLoop>()) {
      collect_loads(l->lower, in.line, out);
      collect_loads(l->upper, in.line, out);
      collect_accesses(l->body, out);
    }
  }
}

// ---- nest extraction ----------------------------------------------------------

bool contains_loop(const StmtList& l) {
  for (const Stmt& s : l) {
    if (s.as<DoLoop>()) return true;
    if (auto* i = s.as<IfBlock>(); i && (contains_loop(i->then_body) || contains_loop(i->else_body)))
      return true;
  }
  return false;
}

std::vector<const Stmt*> code_of(const StmtList& l) {
  std::vector<const Stmt*> out;
  for (const Stmt& s : l)
    if (!s.as<CommentLine>()) out.push_back(&s);
  return out;
}

struct Nest {
  std::vector<const Stmt*> loops;
  std::vector<std::vector<const Stmt*>> prologues; // one per loop, innermost empty
  std::vector<const Stmt*> body;
};

Nest extract_nest(const regions::TaggedRegion& region) {
  if (!contains_loop(region.statements))
    throw Error(ErrorCode::NonLoopRegion, "parallel region contains no DO loop", region.first_line);
  auto top = code_of(region.statements);
  if (top.size() != 1 || !top[0]->as<DoLoop>()) {
    const Stmt* bad = top[0]->as<DoLoop>() ? top[1] : top[0];
    throw Error(ErrorCode::ImperfectNest, "a parallel region must hold exactly one loop nest",
                bad->first_line);
  }
  Nest nest;
  const Stmt* cur = top[0];
  for (;;) {
    nest.loops.push_back(cur);
    auto stmts = code_of(cur->as<DoLoop>()->body);
    std::vector<const Stmt*> inner;
    for (const Stmt* s : stmts)
      if (s->as<DoLoop>()) inner.push_back(s);
    if (inner.empty()) {
      for (const Stmt* s : stmts)
        if (auto* i = s->as<IfBlock>(); i && (contains_loop(i->then_body) || contains_loop(i->else_body)))
          throw Error(ErrorCode::ImperfectNest, "DO loop inside a conditional", s->first_line);
      nest.prologues.emplace_back();
      nest.body = std::move(stmts);
      return nest;
    }
    if (inner.size() > 1)
      throw Error(ErrorCode::ImperfectNest, "more than one loop at the same nesting level",
                  inner[1]->first_line);
    if (stmts.back() != inner.front())
      throw Error(ErrorCode::ImperfectNest, "statements after an inner loop",
                  stmts.back()->first_line);
    stmts.pop_back();
    for (const Stmt* s : stmts) {
      auto* a = s->as<Assign>();
      if (!a || !a->target->as<ScalarRef>())
        throw Error(ErrorCode::ImperfectNest,
                    "only scalar definitions may appear between loop headers", s->first_line);
    }
    nest.prologues.push_back(std::move(stmts));
    cur = inner.front();
  }
}

Instr to_instr(const Stmt& s);

InstrList to_instrs(const StmtList& l) {
  InstrList out;
  for (const Stmt& s : l)
    if (!s.as<CommentLine>()) out.push_back(to_instr(s));
  return out;
}

Instr to_instr(const Stmt& s) {
  Instr in;
  in.line = s.first_line;
  if (auto* a = s.as<Assign>()) {
    if (auto* sc = a->target->as<ScalarRef>()) in.node = DefineScalar{sc->name, a->value};
    else {
      auto* ar = a->target->as<ArrayRef>();
      in.node = StoreArray{ar->name, ar->indices, a->value};
    }
  } else if (auto* i = s.as<IfBlock>()) {
    in.node = Branch{i->cond, to_instrs(i->then_body), to_instrs(i->else_body)};
  } else if (s.as<CallStmt>()) {
    throw Error(ErrorCode::UnsupportedConstruct, "CALL inside a parallel region", s.first_line);
  } else if (s.as<ReturnStmt>()) {
    throw Error(ErrorCode::UnsupportedConstruct, "RETURN inside a parallel region", s.first_line);
  } else {
    throw Error(ErrorCode::ImperfectNest, "nested DO loop in kernel body", s.first_line);
  }
  return in;
}

void collect_names(const ExprPtr& e, std::set<std::string>& names) {
  walk_postorder(e, [&](const ExprPtr& n) {
    if (auto* s = n->as<ScalarRef>()) names.insert(lower(s->name));
    else if (auto* a = n->as<ArrayRef>()) names.insert(lower(a->name));
  });
}

void collect_defs(const InstrList& prog, std::vector<std::string>& order) {
  for (const Instr& in : prog) {
    if (auto* d = in.as<DefineScalar>()) {
      bool seen = std::any_of(order.begin(), order.end(),
                              [&](const std::string& o) { return lower(o) == lower(d->name); });
      if (!seen) order.push_back(d->name);
    } else if (auto* b = in.as<Branch>()) {
      collect_defs(b->then_body, order);
      collect_defs(b->else_body, order);
    } else if (auto* l = in.as<SeqLoop>())
      collect_defs(l->body, order);
  }
}

LoopKernel build_kernel(const regions::TaggedRegion& region, const SymbolTable& syms,
                        std::string name) {
  Nest nest = extract_nest(region);
  LoopKernel k;
  k.name = std::move(name);
  k.first_line = region.first_line;
  k.last_line = region.last_line;
  k.assumptions = region.options;
  for (std::size_t d = 0; d < nest.loops.size(); ++d) {
    const Stmt* s = nest.loops[d];
    const auto* loop = s->as<DoLoop>();
    Domain dom{loop->var, loop->lower, loop->upper, s->first_line, {}};
    for (const Stmt* p : nest.prologues[d]) dom.prologue.push_back(to_instr(*p));
    k.domains.push_back(std::move(dom));
  }
  for (const Stmt* s : nest.body) k.body.push_back(to_instr(*s));

  std::set<std::string> domain_vars;
  for (const auto& d : k.domains) domain_vars.insert(lower(d.var));

  InstrList all;
  for (const auto& d : k.domains) all.insert(all.end(), d.prologue.begin(), d.prologue.end());
  all.insert(all.end(), k.body.begin(), k.body.end());

  std::vector<std::string> defs;
  collect_defs(all, defs);
  std::set<std::string> private_names;
  for (const auto& n : defs) {
    const Symbol& sym = syms.at(n);
    k.privates.push_back({n, sym.type});
    private_names.insert(lower(n));
  }

  std::set<std::string> names;
  for (const auto& d : k.domains) {
    collect_names(d.lower, names);
    collect_names(d.upper, names);
  }
  for_each_expr(all, [&](const ExprPtr& e) { collect_names(e, names); });
  for_each_store(all, [&](const StoreArray& s, int) { names.insert(lower(s.array)); });
  // declared bounds of referenced arrays pull in their extent scalars
  std::set<std::string> extra;
  for (const auto& n : names) {
    const Symbol* sym = syms.find(n);
    if (!sym) continue;
    for (const auto& b : sym->bounds) {
      collect_names(b.lower, extra);
      collect_names(b.upper, extra);
    }
  }
  names.insert(extra.begin(), extra.end());

  for (const Symbol* sym : syms.ordered()) {
    std::string key = lower(sym->name);
    if (!names.count(key) || domain_vars.count(key) || private_names.count(key)) continue;
    if (sym->constant) {
      k.constants.push_back({sym->name, *sym->constant});
      continue;
    }
    KernelParam p;
    p.name = sym->name;
    p.is_array = sym->kind == SymbolKind::Array;
    p.type = sym->type;
    p.bounds = sym->bounds;
    p.intent = sym->intent;
    k.params.push_back(std::move(p));
  }
  return k;
}

int default_grid_axes(const LoopKernel& k) {
  return k.grid_axes > 0 ? k.grid_axes : static_cast<int>(std::min<std::size_t>(2, k.domains.size()));
}

AffineContext kernel_context(const LoopKernel& k, const InstrList& prog) {
  AffineContext ctx;
  for (const auto& c : k.constants)
    if (auto* v = std::get_if<std::int64_t>(&c.value)) ctx.int_consts[lower(c.name)] = *v;
  for (const auto& p : k.params)
    if (!p.is_array && p.type == BaseType::Integer) ctx.int_params.insert(lower(p.name));
  for (const auto& d : k.domains) ctx.domain_vars.insert(lower(d.var));
  for (const auto& p : k.privates) ctx.privates[lower(p.name)] = std::nullopt;

  std::map<std::string, int> count;
  std::function<void(const InstrList&)> tally = [&](const InstrList& l) {
    for (const Instr& in : l) {
      if (auto* d = in.as<DefineScalar>()) ++count[lower(d->name)];
      else if (auto* b = in.as<Branch>()) {
        tally(b->then_body);
        tally(b->else_body);
      } else if (auto* s = in.as<SeqLoop>())
        tally(s->body);
    }
  };
  tally(prog);
  std::function<void(const InstrList&)> fill = [&](const InstrList& l) {
    for (const Instr& in : l) {
      if (auto* d = in.as<DefineScalar>()) {
        std::string n = lower(d->name);
        if (count[n] == 1) ctx.privates[n] = detail::to_affine(d->value, ctx);
      } else if (auto* s = in.as<SeqLoop>())
        fill(s->body);
    }
  };
  fill(prog);
  return ctx;
}

// ---- loop-carried scalars -----------------------------------------------------

class CarriedScan {
public:
  CarriedScan(const SymbolTable& syms) : consts_(detail::context_from(syms)) {
    consts_.int_params.clear();
  }

  void run(const StmtList& body) { walk(body, {}, {}); }
  std::vector<Diagnostic> result() { return std::move(out_); }

private:
  using Set = std::set<std::string>;
  using Inits = std::map<std::string, std::optional<std::int64_t>>;
  struct Frame {
    const DoLoop* loop;
    Inits inits;
  };

  AffineContext consts_;
  std::vector<Diagnostic> out_;
  Set reported_;
  std::vector<Frame> frames_;
  Inits inits_;

  static void writes(const StmtList& l, Set& w) {
    for (const Stmt& s : l) {
      if (auto* a = s.as<Assign>()) {
        if (auto* sc = a->target->as<ScalarRef>()) w.insert(lower(sc->name));
      } else if (auto* d = s.as<DoLoop>())
        writes(d->body, w);
      else if (auto* i = s.as<IfBlock>()) {
        writes(i->then_body, w);
        writes(i->else_body, w);
      }
    }
  }

  std::optional<std::int64_t> constant(const ExprPtr& e) const {
    auto a = detail::to_affine(e, consts_);
    if (a && a->is_const()) return a->c;
    return std::nullopt;
  }

  std::optional<std::string> closed_form(const Assign& a, const std::string& spelled) const {
    if (frames_.empty()) return std::nullopt;
    const Frame& f = frames_.back();
    auto* b = a.value->as<Binary>();
    if (!b || (b->op != BinaryOp::Add && b->op != BinaryOp::Sub)) return std::nullopt;
    auto is_self = [&](const ExprPtr& e) {
      auto* s = e->as<ScalarRef>();
      return s && lower(s->name) == lower(spelled);
    };
    std::optional<std::int64_t> k;
    if (is_self(b->lhs)) {
      k = constant(b->rhs);
      if (k && b->op == BinaryOp::Sub) k = -*k;
    } else if (b->op == BinaryOp::Add && is_self(b->rhs)) {
      k = constant(b->lhs);
    }
    if (!k || *k == 0) return std::nullopt;
    auto init = f.inits.find(lower(spelled));
    if (init == f.inits.end() || !init->second) return std::nullopt;
    auto lo = constant(f.loop->lower);
    if (!lo) return std::nullopt;
    // value in iteration v: c0 + k*(v - lo + 1) = k*v + b
    std::int64_t c = *init->second + *k - *k * *lo;
    const std::string& v = f.loop->var;
    std::string ks = *k < 0 ? "(" + std::to_string(*k) + ")" : std::to_string(*k);
    if (c % *k == 0) {
      std::int64_t off = c / *k;
      std::string base = off == 0   ? v
                         : off > 0 ? "(" + v + "+" + std::to_string(off) + ")"
                                   : "(" + v + "-" + std::to_string(-off) + ")";
      if (*k == 1) return spelled + " = " + (off == 0 ? v : base.substr(1, base.size() - 2));
      return spelled + " = " + base + " * " + ks;
    }
    return spelled + " = " + v + " * " + ks + (c > 0 ? " + " : " - ") + std::to_string(c > 0 ? c : -c);
  }

  void report(const std::string& spelled, const Stmt& st) {
    std::string key = lower(spelled);
    if (reported_.count(key)) return;
    reported_.insert(key);
    Diagnostic d;
    d.severity = Severity::Error;
    d.code = "LOOP_CARRIED_SCALAR";
    d.line = st.first_line;
    d.message = "scalar " + spelled +
                " is read before it is assigned in the iteration and is updated in the loop "
                "body, so its value is carried from the previous iteration";
    if (auto* a = st.as<Assign>()) {
      auto* t = a->target->as<ScalarRef>();
      if (t && lower(t->name) == key) d.hint = closed_form(*a, t->name);
    }
    if (!d.hint) d.hint = "compute " + spelled + " from the loop indices instead of updating it";
    out_.push_back(std::move(d));
  }

  void reads(const ExprPtr& e, const Set& defined, const Set& carried, const Stmt& st) {
    walk_postorder(e, [&](const ExprPtr& n) {
      if (auto* s = n->as<ScalarRef>()) {
        std::string key = lower(s->name);
        if (carried.count(key) && !defined.count(key)) report(s->name, st);
      }
    });
  }

  Set walk(const StmtList& l, Set defined, const Set& carried) {
    for (const Stmt& s : l) {
      if (auto* a = s.as<Assign>()) {
        reads(a->value, defined, carried, s);
        if (auto* ar = a->target->as<ArrayRef>()) {
          for (const auto& i : ar->indices) reads(i, defined, carried, s);
        } else {
          std::string key = lower(a->target->as<ScalarRef>()->name);
          defined.insert(key);
          inits_[key] = constant(a->value);
        }
      } else if (auto* d = s.as<DoLoop>()) {
        reads(d->lower, defined, carried, s);
        reads(d->upper, defined, carried, s);
        Set w;
        writes(d->body, w);
        Set inner_carried = carried;
        inner_carried.insert(w.begin(), w.end());
        Set inner_defined;
        for (const auto& x : defined)
          if (!w.count(x)) inner_defined.insert(x);
        frames_.push_back({d, inits_});
        walk(d->body, inner_defined, inner_carried);
        frames_.pop_back();
        for (const auto& x : w) inits_[x] = std::nullopt;
      } else if (auto* i = s.as<IfBlock>()) {
        reads(i->cond, defined, carried, s);
        Set a1 = walk(i->then_body, defined, carried);
        Set a2 = walk(i->else_body, defined, carried);
        Set both;
        std::set_intersection(a1.begin(), a1.end(), a2.begin(), a2.end(),
                              std::inserter(both, both.end()));
        defined = both;
        Set w;
        writes(i->then_body, w);
        writes(i->else_body, w);
        for (const auto& x : w) inits_[x] = std::nullopt;
      } else if (auto* c = s.as<CallStmt>()) {
        for (const auto& arg : c->args) reads(arg, defined, carried, s);
      }
    }
    return defined;
  }
};

// ---- access conflicts -----------------------------------------------------------

using Matrix = std::vector<std::vector<std::int64_t>>;

// Is there an integer delta with M*delta = rhs? M has full column rank.
bool integer_solution(const Matrix& m, const std::vector<std::int64_t>& rhs) {
  std::size_t cols = m.empty() ? 0 : m.front().size();
  auto verify = [&](const std::vector<std::int64_t>& x) {
    for (std::size_t r = 0; r < m.size(); ++r) {
      std::int64_t s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += m[r][c] * x[c];
      if (s != rhs[r]) return false;
    }
    return true;
  };
  if (cols == 1) {
    for (std::size_t r = 0; r < m.size(); ++r) {
      if (m[r][0] == 0) continue;
      if (rhs[r] % m[r][0] != 0) return false;
      return verify({rhs[r] / m[r][0]});
    }
    return true;
  }
  if (cols == 2) {
    for (std::size_t p = 0; p < m.size(); ++p)
      for (std::size_t q = p + 1; q < m.size(); ++q) {
        std::int64_t det = m[p][0] * m[q][1] - m[p][1] * m[q][0];
        if (det == 0) continue;
        std::int64_t n0 = rhs[p] * m[q][1] - m[p][1] * rhs[q];
        std::int64_t n1 = m[p][0] * rhs[q] - rhs[p] * m[q][0];
        if (n0 % det != 0 || n1 % det != 0) return false;
        return verify({n0 / det, n1 / det});
      }
    return true;
  }
  return true;
}

std::vector<Diagnostic> analyze_accesses(const LoopKernel& k, const SymbolTable& syms) {
  std::vector<Diagnostic> out;
  std::set<std::pair<std::string, std::string>> seen;
  auto emit = [&](Severity sev, const std::string& code, int line, const std::string& text,
                  std::string msg) {
    if (!seen.insert({code, text}).second) return;
    out.push_back({sev, code, line, std::move(msg), std::nullopt});
  };

  std::set<std::string> domain_vars, private_names;
  for (const auto& d : k.domains) domain_vars.insert(lower(d.var));
  for (const auto& p : k.privates) private_names.insert(lower(p.name));

  // scalar rules
  InstrList prog = thread_program(k);
  std::function<void(const InstrList&)> scalars = [&](const InstrList& l) {
    for (const Instr& in : l) {
      if (auto* d = in.as<DefineScalar>()) {
        std::string key = lower(d->name);
        const Symbol* sym = syms.find(key);
        if (domain_vars.count(key))
          emit(Severity::Error, "DOMAIN_VAR_WRITE", in.line, key,
               "loop index " + d->name + " is assigned inside its loop");
        else if (sym && sym->is_dummy())
          emit(Severity::Error, "SHARED_SCALAR_WRITE", in.line, key,
               "argument " + d->name + " is assigned inside a parallel region");
      } else if (auto* b = in.as<Branch>()) {
        scalars(b->then_body);
        scalars(b->else_body);
      } else if (auto* s = in.as<SeqLoop>())
        scalars(s->body);
    }
  };
  scalars(prog);
  for (const auto& d : k.domains) {
    std::set<std::string> names;
    collect_names(d.lower, names);
    collect_names(d.upper, names);
    for (const auto& n : names)
      if (domain_vars.count(n) || private_names.count(n))
        emit(Severity::Error, "NON_RECTANGULAR", d.line, d.var,
             "bounds of loop " + d.var + " depend on " + n);
  }

  int g = default_grid_axes(k);
  std::vector<std::string> grid, seq;
  for (std::size_t i = 0; i < k.domains.size(); ++i)
    (static_cast<int>(i) < g ? grid : seq).push_back(lower(k.domains[i].var));

  AffineContext ctx = kernel_context(k, prog);
  std::vector<Access> acc;
  collect_accesses(prog, acc);

  struct Form {
    const Access* a;
    std::optional<std::vector<Affine>> idx;
    bool uses_seq = false;
  };
  std::vector<Form> forms;
  for (const auto& a : acc) {
    Form f{&a, std::vector<Affine>{}};
    for (const auto& e : a.indices) {
      auto af = detail::to_affine(e, ctx);
      if (!af) {
        f.idx.reset();
        break;
      }
      for (const auto& s : seq)
        if (af->coef(s)) f.uses_seq = true;
      f.idx->push_back(*af);
    }
    forms.push_back(std::move(f));
  }

  auto matrix = [&](const std::vector<Affine>& idx, const std::vector<std::string>& vars) {
    Matrix m;
    for (const auto& a : idx) {
      std::vector<std::int64_t> row;
      for (const auto& v : vars) row.push_back(a.coef(v));
      m.push_back(std::move(row));
    }
    return m;
  };
  std::vector<std::string> all_vars = grid;
  all_vars.insert(all_vars.end(), seq.begin(), seq.end());

  std::set<std::string> stored;
  for (const auto& f : forms)
    if (f.a->store) stored.insert(f.a->array);

  for (const auto& f : forms) {
    if (!f.a->store) continue;
    if (!f.idx) {
      emit(Severity::Warning, "DYNAMIC_INDEX", f.a->line, f.a->text,
           "index of " + f.a->text + " is not affine; independence of iterations is not proven");
      continue;
    }
    int r_all = detail::matrix_rank(matrix(*f.idx, all_vars));
    int r_seq = detail::matrix_rank(matrix(*f.idx, seq));
    if (r_all - r_seq < static_cast<int>(grid.size())) {
      std::string missing;
      for (const auto& v : grid) {
        bool used = std::any_of(f.idx->begin(), f.idx->end(), [&](const Affine& a) { return a.coef(v) != 0; });
        if (!used) missing += (missing.empty() ? "" : ", ") + v;
      }
      emit(Severity::Error, "WRITE_OVERLAP", f.a->line, f.a->text,
           missing.empty() ? "different iterations store to the same element through " + f.a->text
                           : "every iteration of " + missing + " stores to the same element " + f.a->text);
    }
  }

  auto conflict = [&](const Form& s, const Form& o) -> int { // 0 none, 1 proven, 2 unknown
    std::vector<std::int64_t> delta;
    bool zero = true;
    for (std::size_t i = 0; i < s.idx->size(); ++i) {
      Affine d = (*o.idx)[i];
      d.add((*s.idx)[i], -1);
      if (!d.is_const()) return 2;
      delta.push_back(d.c);
      zero = zero && d.c == 0;
    }
    if (zero) return 0;
    if (s.uses_seq || o.uses_seq) return 2;
    return integer_solution(matrix(*s.idx, grid), delta) ? 1 : 0;
  };

  for (std::size_t i = 0; i < forms.size(); ++i) {
    const Form& s = forms[i];
    if (!s.a->store || !s.idx) continue;
    for (std::size_t j = 0; j < forms.size(); ++j) {
      const Form& o = forms[j];
      if (j == i || o.a->array != s.a->array) continue;
      if (o.a->store && j < i) continue;
      if (!o.idx) {
        emit(Severity::Warning, "DYNAMIC_INDEX", o.a->line, o.a->text,
             "index of " + o.a->text + " is not affine; independence from " + s.a->text +
                 " is not proven");
        continue;
      }
      if (o.idx->size() != s.idx->size()) continue;
      int c = conflict(s, o);
      if (c == 2)
        emit(Severity::Warning, "DYNAMIC_INDEX", o.a->line, o.a->text + "|" + s.a->text,
             "could not prove that " + o.a->text + " and " + s.a->text +
                 " touch different elements in different iterations");
      else if (c == 1 && o.a->store)
        emit(Severity::Error, "WRITE_OVERLAP", o.a->line, o.a->text + "|" + s.a->text,
             "stores " + s.a->text + " and " + o.a->text +
                 " write the same element from different iterations");
      else if (c == 1)
        emit(Severity::Error, "READ_WRITE_OVERLAP", o.a->line, o.a->text + "|" + s.a->text,
             "load " + o.a->text + " reads an element that another iteration stores through " +
                 s.a->text);
    }
  }
  return out;
}

} // namespace

std::vector<Diagnostic> detect_loop_carried_deps(const regions::TaggedRegion& region,
                                                 const SymbolTable& syms) {
  CarriedScan scan(syms);
  scan.run(region.statements);
  std::vector<Diagnostic> out = scan.result();
  LoopKernel k;
  try {
    k = build_kernel(region, syms, "kernel");
  } catch (const Error&) {
    return out; // malformed nests are lower_region's business
  }
  auto more = analyze_accesses(k, syms);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

LoopKernel lower_region(const regions::TaggedRegion& region, const SymbolTable& syms,
                        std::string name) {
  if (region.kind != regions::RegionKind::Parallel)
    throw Error(ErrorCode::LoweringFailed, "only parallel regions can be lowered", region.first_line);
  auto diags = detect_loop_carried_deps(region, syms);
  if (has_errors(diags)) throw LoweringError(std::move(diags));
  LoopKernel k = build_kernel(region, syms, std::move(name));
  for (const auto& a : k.assumptions) {
    const Symbol* s = syms.find(a.variable);
    if (!s || s->kind != SymbolKind::Scalar || s->type != BaseType::Integer)
      throw Error(ErrorCode::BadTagOption,
                  "assumption on '" + a.variable + "' which is not an integer scalar",
                  region.first_line);
  }
  k.warnings = std::move(diags);
  return k;
}

InstrList thread_program(const LoopKernel& k) {
  int g = default_grid_axes(k);
  int n = static_cast<int>(k.domains.size());
  InstrList inner = k.body;
  for (int d = n - 1; d >= g; --d) {
    InstrList wrapped = k.domains[d].prologue;
    Instr loop;
    loop.line = k.domains[d].line;
    loop.node = SeqLoop{k.domains[d].var, k.domains[d].lower, k.domains[d].upper, std::move(inner)};
    wrapped.push_back(std::move(loop));
    inner = std::move(wrapped);
  }
  InstrList out;
  for (int d = 0; d < g && d < n; ++d)
    out.insert(out.end(), k.domains[d].prologue.begin(), k.domains[d].prologue.end());
  out.insert(out.end(), inner.begin(), inner.end());
  return out;
}

namespace {

struct Bounds {
  std::optional<std::int64_t> lo, hi;
};

// Interval of a loop-invariant integer expression. Affine parts are exact;
// division by a positive constant and sums of such parts lose correlation.
Bounds interval_of(const ExprPtr& e, const AffineContext& ctx, const detail::Ranges& r) {
  if (auto a = detail::to_affine(e, ctx)) return {detail::min_over(*a, r), detail::max_over(*a, r)};
  auto* b = e->as<Binary>();
  if (!b) return {};
  Bounds l = interval_of(b->lhs, ctx, r);
  Bounds rr = interval_of(b->rhs, ctx, r);
  auto both = [](std::optional<std::int64_t> x, std::optional<std::int64_t> y, auto op)
      -> std::optional<std::int64_t> {
    if (!x || !y) return std::nullopt;
    return op(*x, *y);
  };
  auto plus = [](std::int64_t x, std::int64_t y) { return x + y; };
  auto minus = [](std::int64_t x, std::int64_t y) { return x - y; };
  switch (b->op) {
  case BinaryOp::Add: return {both(l.lo, rr.lo, plus), both(l.hi, rr.hi, plus)};
  case BinaryOp::Sub: return {both(l.lo, rr.hi, minus), both(l.hi, rr.lo, minus)};
  case BinaryOp::Div: {
    auto k = detail::to_affine(b->rhs, ctx);
    if (!k || !k->is_const() || k->c <= 0) return {};
    // integer division truncates toward zero, which is monotone
    Bounds out;
    if (l.lo) out.lo = *l.lo / k->c;
    if (l.hi) out.hi = *l.hi / k->c;
    return out;
  }
  default: return {};
  }
}

std::optional<std::int64_t> extent_min(const Domain& d, const AffineContext& ctx,
                                       const detail::Ranges& r) {
  auto lo = detail::to_affine(d.lower, ctx);
  auto hi = detail::to_affine(d.upper, ctx);
  if (lo && hi) {
    Affine e = *hi;
    e.add(*lo, -1);
    e.c += 1;
    return detail::min_over(e, r);
  }
  Bounds up = interval_of(d.upper, ctx, r);
  Bounds low = interval_of(d.lower, ctx, r);
  if (!up.lo || !low.hi) return std::nullopt;
  return *up.lo - *low.hi + 1;
}

} // namespace

LoopKernel map_grid(LoopKernel k) {
  k.grid_axes = static_cast<int>(std::min<std::size_t>(2, k.domains.size()));
  AffineContext ctx = kernel_context(k, {});
  auto ranges = detail::assumption_ranges(k.assumptions);
  k.warnings.erase(std::remove_if(k.warnings.begin(), k.warnings.end(),
                                  [](const Diagnostic& d) { return d.code == "DYNAMIC_BOUNDS"; }),
                   k.warnings.end());
  for (int a = 0; a < k.grid_axes; ++a) {
    const Domain& d = k.domains[a];
    auto m = extent_min(d, ctx, ranges);
    if (m && *m >= 1) continue;
    k.warnings.push_back({Severity::Warning, "DYNAMIC_BOUNDS", d.line,
                          "extent of domain " + d.var + " (" + compact(*d.upper) + " - " +
                              compact(*d.lower) + " + 1) is not provably >= 1; checked at launch",
                          std::nullopt});
  }
  return k;
}

BoundsStatus check_bounds_static(const LoopKernel& k) {
  InstrList prog = thread_program(k);
  AffineContext ctx = kernel_context(k, prog);
  auto ranges = detail::assumption_ranges(k.assumptions);
  // box of domain values
  std::map<std::string, std::pair<Affine, Affine>> box;
  AffineContext bound_ctx = ctx;
  bound_ctx.domain_vars.clear();
  for (const auto& d : k.domains) {
    auto m = extent_min(d, bound_ctx, ranges);
    if (!m || *m < 1) return BoundsStatus::Unknown;
    auto lo = detail::to_affine(d.lower, bound_ctx);
    auto hi = detail::to_affine(d.upper, bound_ctx);
    if (!lo || !hi) return BoundsStatus::Unknown;
    box[lower(d.var)] = {*lo, *hi};
  }
  auto substitute = [&](const Affine& a, bool maximize) {
    Affine out;
    out.c = a.c;
    for (const auto& [name, c] : a.terms) {
      auto it = box.find(name);
      if (it == box.end()) {
        Affine t;
        t.terms[name] = c;
        out.add(t);
        continue;
      }
      const Affine& pick = (c > 0) == maximize ? it->second.second : it->second.first;
      out.add(pick, c);
    }
    return out;
  };

  std::vector<Access> acc;
  collect_accesses(prog, acc);
  for (const auto& a : acc) {
    const KernelParam* p = k.param(a.array);
    if (!p || p->rank() != static_cast<int>(a.indices.size())) return BoundsStatus::Unknown;
    for (std::size_t i = 0; i < a.indices.size(); ++i) {
      auto idx = detail::to_affine(a.indices[i], ctx);
      if (!idx) return BoundsStatus::Unknown;
      std::optional<Affine> lb;
      if (p->bounds[i].lower) lb = detail::to_affine(p->bounds[i].lower, bound_ctx);
      else lb = Affine{};
      if (!p->bounds[i].lower) lb->c = 1;
      auto ub = detail::to_affine(p->bounds[i].upper, bound_ctx);
      if (!lb || !ub) return BoundsStatus::Unknown;
      Affine hi = substitute(*idx, true);
      hi.add(*ub, -1);
      Affine lo = substitute(*idx, false);
      lo.add(*lb, -1);
      auto mx = detail::max_over(hi, ranges);
      auto mn = detail::min_over(lo, ranges);
      if (!mx || *mx > 0 || !mn || *mn < 0) return BoundsStatus::Unknown;
    }
  }
  return BoundsStatus::Verified;
}

std::vector<std::string> LoopKernel::loaded_arrays() const {
  std::vector<Access> acc;
  collect_accesses(thread_program(*this), acc);
  std::set<std::string> s;
  for (const auto& a : acc)
    if (!a.store) s.insert(a.array);
  return {s.begin(), s.end()};
}

std::vector<std::string> LoopKernel::stored_arrays() const {
  std::vector<Access> acc;
  collect_accesses(thread_program(*this), acc);
  std::set<std::string> s;
  for (const auto& a : acc)
    if (a.store) s.insert(a.array);
  return {s.begin(), s.end()};
}

} // namespace loopport::ir
