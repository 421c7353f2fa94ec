// SPDX-License-Identifier: Apache-2.0
#include "loopport/hostexec.hpp"

#include <algorithm>
#include <cmath>

#include "loopport/detail/arith.hpp"
#include "loopport/error.hpp"

namespace loopport::host {

using frontend::BaseType;
using frontend::Expr;
using frontend::lower;
using frontend::Stmt;
using frontend::StmtList;

CellPtr Cell::integer(std::int64_t v) {
  auto c = std::make_shared<Cell>();
  c->type = BaseType::Integer;
  c->i = v;
  return c;
}

CellPtr Cell::real(double v) {
  auto c = std::make_shared<Cell>();
  c->type = BaseType::Real64;
  c->r = v;
  return c;
}

// program

void Program::add_source(const std::string& source) {
  for (auto& u : frontend::parse_source(source)) {
    std::string key = lower(u.sub.name);
    if (subs_.count(key))
      throw Error(ErrorCode::UnsupportedConstruct, "subroutine " + u.sub.name + " defined twice",
                  u.sub.first_line);
    auto t = std::make_shared<TranslatedSubroutine>();
    t->regions = regions::extract_regions(u.sub);
    int parallel = 0;
    for (const auto& r : t->regions) {
      if (r.kind != regions::RegionKind::Parallel) {
        t->kernels.push_back(nullptr);
        continue;
      }
      std::string name = ++parallel == 1 ? key : key + "_" + std::to_string(parallel);
      t->kernels.push_back(
          std::make_shared<const ir::LoopKernel>(ir::map_grid(ir::lower_region(r, u.symbols, name))));
    }
    t->unit = std::move(u);
    subs_[key] = std::move(t);
    order_.push_back(key);
  }
}

Program Program::translate(const std::vector<std::string>& sources) {
  Program p;
  for (const auto& s : sources) p.add_source(s);
  return p;
}

const TranslatedSubroutine* Program::find(const std::string& name) const {
  auto it = subs_.find(lower(name));
  return it == subs_.end() ? nullptr : it->second.get();
}

std::vector<std::string> Program::names() const { return order_; }

std::vector<std::shared_ptr<const ir::LoopKernel>> Program::kernels() const {
  std::vector<std::shared_ptr<const ir::LoopKernel>> out;
  for (const auto& n : order_)
    for (const auto& k : subs_.at(n)->kernels)
      if (k) out.push_back(k);
  return out;
}

// handles and externals

HandleTable::HandleTable() {
  table_[0] = std::make_shared<RuntimeContext>(RuntimeContext{"default", 0, 1});
}

std::int64_t HandleTable::issue(std::shared_ptr<RuntimeContext> ctx) {
  std::int64_t h = next_++;
  table_[h] = std::move(ctx);
  return h;
}

std::shared_ptr<RuntimeContext> HandleTable::convert(std::int64_t raw) const {
  auto it = table_.find(raw);
  if (it == table_.end()) throw Error(ErrorCode::BadHandle, "handle " + std::to_string(raw) + " was never issued");
  return it->second;
}

namespace {

const Cell& cell_arg(const std::vector<Arg>& args, std::size_t k) { return *std::get<CellPtr>(args.at(k)); }

} // namespace

std::int64_t ExternalCall::integer(std::size_t k) const { return cell_arg(args, k).i; }
double ExternalCall::real(std::size_t k) const { return cell_arg(args, k).r; }
void ExternalCall::set_integer(std::size_t k, std::int64_t v) const { std::get<CellPtr>(args.at(k))->i = v; }
void ExternalCall::set_real(std::size_t k, double v) const { std::get<CellPtr>(args.at(k))->r = v; }
vdev::BufferId ExternalCall::buffer(std::size_t k) const { return std::get<vdev::BufferId>(args.at(k)); }

vdev::Payload& ExternalCall::data(std::size_t k, vdev::Mode mode) const {
  device.access(buffer(k), side, mode);
  return device.payload(buffer(k), side);
}

void ExternalRegistry::add(const std::string& name, ExternalSpec spec) { table_[lower(name)] = std::move(spec); }

const ExternalSpec* ExternalRegistry::find(const std::string& name) const {
  auto it = table_.find(lower(name));
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<std::string> ExternalRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : table_) out.push_back(n);
  return out;
}

namespace {

std::vector<double>& reals(vdev::Payload& p, const char* who) {
  auto* v = std::get_if<std::vector<double>>(&p);
  if (!v) throw Error(ErrorCode::BindingMismatch, std::string(who) + " needs a real array");
  return *v;
}

std::size_t checked_count(std::int64_t n, std::size_t have, const char* who) {
  if (n < 0 || static_cast<std::size_t>(n) > have)
    throw Error(ErrorCode::BindingMismatch, std::string(who) + ": size " + std::to_string(n) +
                                                " does not fit a buffer of " + std::to_string(have));
  return static_cast<std::size_t>(n);
}

} // namespace

void register_builtin_externals(ExternalRegistry& reg) {
  using K = ParamKind;
  reg.add("norm2", {{K::Array, K::Integer, K::Real}, [](const ExternalCall& c) {
                      auto& v = reals(c.data(0, vdev::Mode::Read), "norm2");
                      std::size_t n = checked_count(c.integer(1), v.size(), "norm2");
                      double s = 0.0;
                      for (std::size_t k = 0; k < n; ++k) s += v[k] * v[k];
                      c.set_real(2, std::sqrt(s));
                    }});
  reg.add("cholesky_factor", {{K::Array, K::Integer}, [](const ExternalCall& c) {
                                auto& a = reals(c.data(0, vdev::Mode::ReadWrite), "cholesky_factor");
                                std::int64_t ni = c.integer(1);
                                auto n = checked_count(ni, a.size(), "cholesky_factor");
                                checked_count(ni * ni, a.size(), "cholesky_factor");
                                auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i + j * n]; };
                                for (std::size_t j = 0; j < n; ++j) {
                                  double d = A(j, j);
                                  for (std::size_t k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
                                  if (!(d > 0.0))
                                    throw Error(ErrorCode::NotSPD, "pivot " + std::to_string(j + 1) +
                                                                       " is not positive");
                                  A(j, j) = std::sqrt(d);
                                  for (std::size_t i = j + 1; i < n; ++i) {
                                    double s = A(i, j);
                                    for (std::size_t k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
                                    A(i, j) = s / A(j, j);
                                  }
                                  for (std::size_t i = 0; i < j; ++i) A(i, j) = 0.0;
                                }
                              }});
  reg.add("cholesky_solve", {{K::Array, K::Array, K::Array, K::Integer}, [](const ExternalCall& c) {
                               std::int64_t ni = c.integer(3);
                               std::vector<double> y = reals(c.data(1, vdev::Mode::Read), "cholesky_solve");
                               const auto& l = reals(c.data(0, vdev::Mode::Read), "cholesky_solve");
                               checked_count(ni * ni, l.size(), "cholesky_solve");
                               auto n = checked_count(ni, y.size(), "cholesky_solve");
                               for (std::size_t i = 0; i < n; ++i) {
                                 double s = y[i];
                                 for (std::size_t k = 0; k < i; ++k) s -= l[i + k * n] * y[k];
                                 y[i] = s / l[i + i * n];
                               }
                               for (std::size_t i = n; i-- > 0;) {
                                 double s = y[i];
                                 for (std::size_t k = i + 1; k < n; ++k) s -= l[k + i * n] * y[k];
                                 y[i] = s / l[i + i * n];
                               }
                               auto& x = reals(c.data(2, vdev::Mode::Write), "cholesky_solve");
                               checked_count(ni, x.size(), "cholesky_solve");
                               std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), x.begin());
                             }});
  reg.add("ctx_rank", {{K::Handle, K::Integer, K::Integer}, [](const ExternalCall& c) {
                         c.set_integer(1, c.handles[0]->rank);
                         c.set_integer(2, 0);
                       }});
  reg.add("ctx_size", {{K::Handle, K::Integer, K::Integer}, [](const ExternalCall& c) {
                         c.set_integer(1, c.handles[0]->size);
                         c.set_integer(2, 0);
                       }});
}

// interpreter

vdev::ElemType Interpreter::elem_type(BaseType t) {
  return t == BaseType::Integer ? vdev::ElemType::Int32 : vdev::ElemType::Real64;
}

Interpreter::Interpreter(const Program& program, const ExternalRegistry& registry, vdev::Device& device,
                         ExecMode mode)
    : program_(program), registry_(registry), device_(device), mode_(mode) {}

namespace {

struct Val {
  bool is_int = true;
  std::int64_t i = 0;
  double r = 0.0;
  double real() const { return is_int ? static_cast<double>(i) : r; }
  std::int64_t integer() const { return is_int ? i : arith::to_int(r); }
};

Val ival(std::int64_t v) { return {true, v, 0.0}; }
Val rval(double v) { return {false, 0, v}; }

std::optional<std::int64_t> int_scalar(const Environment& env, const frontend::SymbolTable& syms,
                                       const std::string& name) {
  std::string key = lower(name);
  if (auto it = env.scalars.find(key); it != env.scalars.end() && it->second->type == BaseType::Integer)
    return it->second->i;
  return syms.int_constant(key);
}

} // namespace

class Exec {
public:
  Exec(Interpreter& in, const TranslatedSubroutine& sub, Environment& env) : in_(in), sub_(sub), env_(env) {}

  enum class Flow { Normal, Return };

  Flow block(const StmtList& body) {
    for (const auto& s : body)
      if (stmt(s) == Flow::Return) return Flow::Return;
    return Flow::Normal;
  }

  Flow stmt(const Stmt& s) {
    try {
      return stmt_inner(s);
    } catch (const Error& e) {
      if (e.line() != 0) throw;
      throw Error(e.code(), e.detail(), s.first_line);
    }
  }

  Val eval(const Expr& e) {
    using namespace frontend;
    if (auto* i = e.as<IntLit>()) return ival(i->value);
    if (auto* f = e.as<RealLit>()) return rval(f->value);
    if (auto* l = e.as<LogicalLit>()) return ival(l->value ? 1 : 0);
    if (auto* s = e.as<ScalarRef>()) {
      std::string key = lower(s->name);
      if (auto it = env_.scalars.find(key); it != env_.scalars.end())
        return it->second->type == BaseType::Integer ? ival(it->second->i) : rval(it->second->r);
      const Symbol* sym = sub_.unit.symbols.find(key);
      if (sym && sym->constant) {
        if (auto* iv = std::get_if<std::int64_t>(&*sym->constant)) return ival(*iv);
        return rval(std::get<double>(*sym->constant));
      }
      throw Error(ErrorCode::UndeclaredSymbol, "no scalar named " + s->name, e.line);
    }
    if (auto* a = e.as<ArrayRef>()) {
      const ArrayBinding& b = array(a->name, e.line);
      std::size_t off = offset(b, a->name, a->indices, e.line);
      vdev::Device& d = in_.device();
      d.access(b.buffer, vdev::Side::Host, vdev::Mode::Read);
      const auto& p = d.payload(b.buffer, vdev::Side::Host);
      if (auto* iv = std::get_if<std::vector<std::int32_t>>(&p)) return ival((*iv)[off]);
      return rval(std::get<std::vector<double>>(p)[off]);
    }
    if (auto* u = e.as<Unary>()) {
      Val v = eval(*u->operand);
      switch (u->op) {
      case UnaryOp::Plus: return v;
      case UnaryOp::Neg: return v.is_int ? ival(-v.i) : rval(-v.r);
      case UnaryOp::Not: return ival(v.i ? 0 : 1);
      }
    }
    if (auto* b = e.as<Binary>()) return binary(*b);
    if (auto* c = e.as<IntrinsicCall>()) return intrinsic(*c, e.line);
    throw Error(ErrorCode::UnsupportedConstruct, "unsupported expression", e.line);
  }

private:
  Interpreter& in_;
  const TranslatedSubroutine& sub_;
  Environment& env_;

  const ArrayBinding& array(const std::string& name, int line) {
    auto it = env_.arrays.find(lower(name));
    if (it == env_.arrays.end()) throw Error(ErrorCode::UndeclaredSymbol, "no array named " + name, line);
    return it->second;
  }

  std::size_t offset(const ArrayBinding& b, const std::string& name, const std::vector<frontend::ExprPtr>& idx,
                     int line) {
    std::int64_t v[7] = {};
    if (static_cast<int>(idx.size()) != b.view.rank() || idx.size() > 7)
      throw Error(ErrorCode::TypeError, "wrong number of subscripts for " + name, line);
    for (std::size_t k = 0; k < idx.size(); ++k) v[k] = eval(*idx[k]).integer();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& dim = b.view.dims[k];
      if (v[k] < dim.lower || v[k] > dim.upper)
        throw Error(ErrorCode::OutOfBoundsAccess,
                    "index " + std::to_string(v[k]) + " outside " + std::to_string(dim.lower) + ":" +
                        std::to_string(dim.upper) + " in dimension " + std::to_string(k + 1) + " of " + lower(name),
                    line);
    }
    return b.view.offset(v);
  }

  Val binary(const frontend::Binary& b) {
    using frontend::BinaryOp;
    Val l = eval(*b.lhs);
    Val r = eval(*b.rhs);
    if (frontend::is_logical(b.op)) {
      bool x = l.i != 0, y = r.i != 0;
      switch (b.op) {
      case BinaryOp::And: return ival(x && y);
      case BinaryOp::Or: return ival(x || y);
      case BinaryOp::Eqv: return ival(x == y);
      default: return ival(x != y);
      }
    }
    bool ints = l.is_int && r.is_int;
    if (frontend::is_relational(b.op)) {
      auto cmp = [&](auto x, auto y) -> bool {
        switch (b.op) {
        case BinaryOp::Eq: return x == y;
        case BinaryOp::Ne: return x != y;
        case BinaryOp::Lt: return x < y;
        case BinaryOp::Le: return x <= y;
        case BinaryOp::Gt: return x > y;
        default: return x >= y;
        }
      };
      return ival(ints ? cmp(l.i, r.i) : cmp(l.real(), r.real()));
    }
    if (b.op == BinaryOp::Pow) {
      if (ints) return ival(arith::ipow(l.i, r.i));
      if (r.is_int) return rval(arith::rpowi(l.real(), r.i));
      return rval(arith::rpow(l.real(), r.real()));
    }
    if (ints) {
      switch (b.op) {
      case BinaryOp::Add: return ival(l.i + r.i);
      case BinaryOp::Sub: return ival(l.i - r.i);
      case BinaryOp::Mul: return ival(l.i * r.i);
      default: return ival(arith::idiv(l.i, r.i));
      }
    }
    double x = l.real(), y = r.real();
    switch (b.op) {
    case BinaryOp::Add: return rval(x + y);
    case BinaryOp::Sub: return rval(x - y);
    case BinaryOp::Mul: return rval(x * y);
    default: return rval(x / y);
    }
  }

  Val intrinsic(const frontend::IntrinsicCall& c, int line) {
    std::vector<Val> a;
    for (const auto& e : c.args) a.push_back(eval(*e));
    const std::string& n = c.name;
    auto need = [&](std::size_t k) {
      if (a.size() != k) throw Error(ErrorCode::TypeError, "wrong argument count for " + n, line);
    };
    if (n == "sqrt") return need(1), rval(std::sqrt(a[0].real()));
    if (n == "exp") return need(1), rval(std::exp(a[0].real()));
    if (n == "log") return need(1), rval(std::log(a[0].real()));
    if (n == "dble") return need(1), rval(a[0].real());
    if (n == "int") return need(1), ival(a[0].integer());
    if (n == "abs") {
      need(1);
      return a[0].is_int ? ival(a[0].i < 0 ? -a[0].i : a[0].i) : rval(std::fabs(a[0].r));
    }
    if (n == "mod") {
      need(2);
      if (a[0].is_int && a[1].is_int) return ival(arith::imod(a[0].i, a[1].i));
      return rval(arith::rmod(a[0].real(), a[1].real()));
    }
    if (n == "min" || n == "max") {
      if (a.empty()) throw Error(ErrorCode::TypeError, "wrong argument count for " + n, line);
      bool ints = std::all_of(a.begin(), a.end(), [](const Val& v) { return v.is_int; });
      bool mn = n == "min";
      if (ints) {
        std::int64_t acc = a[0].i;
        for (std::size_t k = 1; k < a.size(); ++k) acc = mn ? std::min(acc, a[k].i) : std::max(acc, a[k].i);
        return ival(acc);
      }
      double acc = a[0].real();
      for (std::size_t k = 1; k < a.size(); ++k) acc = mn ? std::min(acc, a[k].real()) : std::max(acc, a[k].real());
      return rval(acc);
    }
    throw Error(ErrorCode::UnsupportedConstruct, "unknown intrinsic " + n, line);
  }

  CellPtr scalar_cell(const std::string& name, int line) {
    auto it = env_.scalars.find(lower(name));
    if (it == env_.scalars.end())
      throw Error(ErrorCode::UnsupportedConstruct, "cannot assign to " + name, line);
    return it->second;
  }

  static void assign(Cell& c, const Val& v) {
    if (c.type == BaseType::Integer) c.i = v.integer();
    else c.r = v.real();
  }

  Flow stmt_inner(const Stmt& s) {
    using namespace frontend;
    if (auto* a = s.as<Assign>()) {
      Val v = eval(*a->value);
      if (auto* sr = a->target->as<ScalarRef>()) {
        assign(*scalar_cell(sr->name, s.first_line), v);
      } else {
        const auto& ar = *a->target->as<ArrayRef>();
        const ArrayBinding& b = array(ar.name, s.first_line);
        std::size_t off = offset(b, ar.name, ar.indices, s.first_line);
        vdev::Device& d = in_.device();
        d.access(b.buffer, vdev::Side::Host, vdev::Mode::Write);
        auto& p = d.payload(b.buffer, vdev::Side::Host);
        if (auto* iv = std::get_if<std::vector<std::int32_t>>(&p)) (*iv)[off] = arith::narrow(v.integer());
        else std::get<std::vector<double>>(p)[off] = v.real();
      }
      return Flow::Normal;
    }
    if (auto* d = s.as<DoLoop>()) {
      CellPtr var = scalar_cell(d->var, s.first_line);
      std::int64_t lo = eval(*d->lower).integer();
      std::int64_t hi = eval(*d->upper).integer();
      std::int64_t v = lo;
      for (; v <= hi; ++v) {
        var->i = v;
        if (block(d->body) == Flow::Return) return Flow::Return;
      }
      var->i = v;
      return Flow::Normal;
    }
    if (auto* f = s.as<IfBlock>()) return block(eval(*f->cond).i ? f->then_body : f->else_body);
    if (auto* c = s.as<CallStmt>()) {
      in_.call(c->name, actual_args(*c));
      return Flow::Normal;
    }
    if (s.as<ReturnStmt>()) return Flow::Return;
    return Flow::Normal;
  }

  std::vector<Arg> actual_args(const frontend::CallStmt& c) {
    using namespace frontend;
    std::vector<Arg> out;
    for (const auto& e : c.args) {
      if (auto* s = e->as<ScalarRef>()) {
        std::string key = lower(s->name);
        if (auto it = env_.arrays.find(key); it != env_.arrays.end()) {
          out.emplace_back(it->second.buffer);
          continue;
        }
        if (auto it = env_.scalars.find(key); it != env_.scalars.end()) {
          out.emplace_back(it->second);
          continue;
        }
      }
      Val v = eval(*e);
      out.emplace_back(v.is_int ? Cell::integer(v.i) : Cell::real(v.r));
    }
    return out;
  }
};

Environment Interpreter::bind(const TranslatedSubroutine& sub, const std::vector<Arg>& args) {
  const auto& syms = sub.unit.symbols;
  const auto& params = sub.unit.sub.params;
  if (args.size() != params.size())
    throw Error(ErrorCode::ArityMismatch, sub.unit.sub.name + " expects " + std::to_string(params.size()) +
                                              " arguments, got " + std::to_string(args.size()));
  Environment env;
  env.registry = &registry_;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& sym = syms.at(params[k]);
    if (sym.kind != frontend::SymbolKind::Scalar) continue;
    auto* c = std::get_if<CellPtr>(&args[k]);
    if (!c) throw Error(ErrorCode::BindingMismatch, "argument " + sym.name + " of " + sub.unit.sub.name + " must be a scalar");
    if ((*c)->type != sym.type)
      throw Error(ErrorCode::BindingMismatch, "argument " + sym.name + " of " + sub.unit.sub.name + " has the wrong type");
    env.scalars[lower(sym.name)] = *c;
  }
  for (const auto* sym : syms.ordered())
    if (!sym->is_dummy() && !sym->constant && sym->kind == frontend::SymbolKind::Scalar)
      env.scalars[lower(sym->name)] = sym->type == BaseType::Integer ? Cell::integer(0) : Cell::real(0.0);

  auto lookup = [&](const std::string& n) { return int_scalar(env, syms, n); };
  auto view_of = [&](const frontend::Symbol& sym) {
    vdev::Shape s;
    for (const auto& d : sym.bounds) {
      auto lo = d.lower ? ir::eval_int(*d.lower, lookup) : std::optional<std::int64_t>(1);
      auto hi = ir::eval_int(*d.upper, lookup);
      if (!lo || !hi) throw Error(ErrorCode::BindingMismatch, "cannot evaluate bounds of " + sym.name, sym.line);
      if (*hi < *lo) throw Error(ErrorCode::BindingMismatch, "empty bounds for " + sym.name, sym.line);
      s.dims.push_back({*lo, *hi});
    }
    return s;
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& sym = syms.at(params[k]);
    if (sym.kind != frontend::SymbolKind::Array) continue;
    auto* id = std::get_if<vdev::BufferId>(&args[k]);
    if (!id) throw Error(ErrorCode::BindingMismatch, "argument " + sym.name + " of " + sub.unit.sub.name + " must be an array");
    const auto& st = device_.state(*id);
    ArrayBinding b{*id, view_of(sym), elem_type(sym.type)};
    if (st.type != b.type)
      throw Error(ErrorCode::BindingMismatch, "array " + sym.name + " of " + sub.unit.sub.name + " has the wrong element type");
    if (b.view.element_count() > st.shape.element_count())
      throw Error(ErrorCode::BindingMismatch, "array " + sym.name + " of " + sub.unit.sub.name + " needs " +
                                                  std::to_string(b.view.element_count()) + " elements, buffer has " +
                                                  std::to_string(st.shape.element_count()));
    env.arrays[lower(sym.name)] = std::move(b);
  }
  for (const auto* sym : syms.ordered()) {
    if (sym->is_dummy() || sym->kind != frontend::SymbolKind::Array) continue;
    vdev::Shape s = view_of(*sym);
    vdev::BufferId id = device_.create(s, elem_type(sym->type), vdev::Initial::ZeroedBoth);
    env.temporaries.push_back(id);
    env.arrays[lower(sym->name)] = {id, s, elem_type(sym->type)};
  }
  return env;
}

Environment Interpreter::interpret(const TranslatedSubroutine& sub, std::size_t region, Environment env) {
  const auto& r = sub.regions.at(region);
  const auto& k = sub.kernels.at(region);
  if (r.kind == regions::RegionKind::Parallel && mode_ == ExecMode::Device && k) {
    launch(k, env);
    return env;
  }
  Exec(*this, sub, env).block(r.statements);
  return env;
}

void Interpreter::launch(const std::shared_ptr<const ir::LoopKernel>& k, const Environment& env) {
  vdev::LaunchPlan plan{k, {}, schedule_};
  for (const auto& p : k->params) {
    std::string key = lower(p.name);
    if (p.is_array) {
      plan.args[key] = env.arrays.at(key).buffer;
    } else {
      const Cell& c = *env.scalars.at(key);
      if (c.type == BaseType::Integer) plan.args[key] = c.i;
      else plan.args[key] = c.r;
    }
  }
  device_.launch(plan);
}

void Interpreter::run_subroutine(const TranslatedSubroutine& sub, const std::vector<Arg>& args) {
  Environment env = bind(sub, args);
  struct Cleanup {
    vdev::Device& d;
    std::vector<vdev::BufferId>& ids;
    ~Cleanup() {
      for (auto id : ids)
        if (d.alive(id)) d.destroy(id);
    }
  } cleanup{device_, env.temporaries};
  for (std::size_t r = 0; r < sub.regions.size(); ++r) {
    const auto& reg = sub.regions[r];
    if (reg.kind == regions::RegionKind::Parallel && mode_ == ExecMode::Device && sub.kernels[r]) {
      launch(sub.kernels[r], env);
      continue;
    }
    if (Exec(*this, sub, env).block(reg.statements) == Exec::Flow::Return) return;
  }
}

void Interpreter::call_external(const ExternalSpec& spec, const std::vector<Arg>& args) {
  std::vector<std::shared_ptr<RuntimeContext>> handles(args.size());
  for (std::size_t k = 0; k < args.size(); ++k) {
    ParamKind want = spec.params[k];
    bool is_buf = std::holds_alternative<vdev::BufferId>(args[k]);
    if (want == ParamKind::Array) {
      if (!is_buf) throw Error(ErrorCode::BindingMismatch, "argument " + std::to_string(k + 1) + " must be an array");
      continue;
    }
    if (is_buf) throw Error(ErrorCode::BindingMismatch, "argument " + std::to_string(k + 1) + " must be a scalar");
    const Cell& c = *std::get<CellPtr>(args[k]);
    bool want_int = want != ParamKind::Real;
    if ((c.type == BaseType::Integer) != want_int)
      throw Error(ErrorCode::BindingMismatch, "argument " + std::to_string(k + 1) + " has the wrong type");
    if (want == ParamKind::Handle) handles[k] = handles_.convert(c.i);
  }
  device_.count_external_call();
  ExternalCall call{*this, device_, mode_ == ExecMode::Device ? vdev::Side::Device : vdev::Side::Host, args,
                    std::move(handles)};
  spec.impl(call);
}

void Interpreter::call(const std::string& name, const std::vector<Arg>& args) {
  if (const auto* sub = program_.find(name)) {
    run_subroutine(*sub, args);
    return;
  }
  if (const auto* ext = registry_.find(name)) {
    if (ext->params.size() != args.size())
      throw Error(ErrorCode::ArityMismatch, name + " expects " + std::to_string(ext->params.size()) +
                                                " arguments, got " + std::to_string(args.size()));
    call_external(*ext, args);
    return;
  }
  throw Error(ErrorCode::UnknownCallee, "no subroutine or external named " + name);
}

} // namespace loopport::host
