// SPDX-License-Identifier: Apache-2.0
#include "bytecode.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "loopport/detail/arith.hpp"
#include "loopport/error.hpp"

namespace loopport::vdev {

using namespace frontend;

class Compiler {
public:
  Compiler(const ir::LoopKernel& k, CompiledKernel& out) : k_(k), out_(out) {}

  void run() {
    for (const auto& c : k_.constants) consts_[lower(c.name)] = c.value;
    for (std::size_t d = 0; d < k_.domains.size(); ++d) {
      int r = new_int();
      ints_[lower(k_.domains[d].var)] = r;
      if (static_cast<int>(d) < k_.grid_axes) out_.grid_regs_.push_back(r);
    }
    for (const auto& p : k_.privates) {
      if (p.type == BaseType::Integer) ints_[lower(p.name)] = new_int();
      else reals_[lower(p.name)] = new_real();
    }
    for (const auto& p : k_.params) {
      std::string key = lower(p.name);
      if (p.is_array) {
        slots_[key] = static_cast<int>(out_.arrays_.size());
        out_.arrays_.push_back({key, p.type == BaseType::Integer, p.rank()});
        if (p.rank() > kMaxRank)
          throw Error(ErrorCode::LoweringFailed, "array rank above 7: " + p.name);
        continue;
      }
      bool is_int = p.type == BaseType::Integer;
      int r = is_int ? new_int() : new_real();
      (is_int ? ints_ : reals_)[key] = r;
      out_.scalars_.push_back({key, is_int, r});
    }
    block(ir::thread_program(k_));
    emit({Op::Halt});
    out_.n_int_ = n_int_;
    out_.n_real_ = n_real_;
  }

private:
  struct Val {
    int reg;
    bool is_int;
  };

  const ir::LoopKernel& k_;
  CompiledKernel& out_;
  std::map<std::string, ConstValue> consts_;
  std::map<std::string, int> ints_, reals_, slots_;
  int n_int_ = 0, n_real_ = 0;

  int new_int() { return n_int_++; }
  int new_real() { return n_real_++; }
  std::size_t emit(Ins in) {
    out_.code_.push_back(in);
    return out_.code_.size() - 1;
  }
  std::size_t here() const { return out_.code_.size(); }

  int as_int(Val v) {
    if (v.is_int) return v.reg;
    int r = new_int();
    emit({Op::R2I, r, v.reg});
    return r;
  }
  int as_real(Val v) {
    if (!v.is_int) return v.reg;
    int r = new_real();
    emit({Op::I2R, r, v.reg});
    return r;
  }

  [[noreturn]] void unsupported(const Expr& e, const std::string& what) {
    throw Error(ErrorCode::LoweringFailed, what + ": " + ir::compact(e), e.line);
  }

  int indices(const std::vector<ExprPtr>& idx) {
    int base = n_int_;
    n_int_ += static_cast<int>(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      int r = as_int(expr(*idx[k]));
      emit({Op::IMov, base + static_cast<int>(k), r});
    }
    return base;
  }

  Val expr(const Expr& e) {
    if (auto* i = e.as<IntLit>()) {
      int r = new_int();
      emit({Op::IConst, r, 0, 0, i->value});
      return {r, true};
    }
    if (auto* f = e.as<RealLit>()) {
      int r = new_real();
      emit({Op::RConst, r, 0, 0, 0, f->value});
      return {r, false};
    }
    if (auto* l = e.as<LogicalLit>()) {
      int r = new_int();
      emit({Op::IConst, r, 0, 0, l->value ? 1 : 0});
      return {r, true};
    }
    if (auto* s = e.as<ScalarRef>()) {
      std::string key = lower(s->name);
      if (auto it = ints_.find(key); it != ints_.end()) return {it->second, true};
      if (auto it = reals_.find(key); it != reals_.end()) return {it->second, false};
      if (auto it = consts_.find(key); it != consts_.end()) {
        if (auto* iv = std::get_if<std::int64_t>(&it->second)) {
          int r = new_int();
          emit({Op::IConst, r, 0, 0, *iv});
          return {r, true};
        }
        int r = new_real();
        emit({Op::RConst, r, 0, 0, 0, std::get<double>(it->second)});
        return {r, false};
      }
      unsupported(e, "unbound scalar");
    }
    if (auto* a = e.as<ArrayRef>()) {
      auto it = slots_.find(lower(a->name));
      if (it == slots_.end()) unsupported(e, "unbound array");
      bool is_int = out_.arrays_[it->second].is_int;
      int base = indices(a->indices);
      int r = is_int ? new_int() : new_real();
      emit({is_int ? Op::LoadI : Op::LoadR, r, it->second, base});
      return {r, is_int};
    }
    if (auto* u = e.as<Unary>()) {
      Val v = expr(*u->operand);
      switch (u->op) {
      case UnaryOp::Plus: return v;
      case UnaryOp::Neg: {
        int r = v.is_int ? new_int() : new_real();
        emit({v.is_int ? Op::INeg : Op::RNeg, r, v.reg});
        return {r, v.is_int};
      }
      case UnaryOp::Not: {
        int r = new_int();
        emit({Op::LNot, r, v.reg});
        return {r, true};
      }
      }
    }
    if (auto* b = e.as<Binary>()) return binary(*b);
    if (auto* c = e.as<IntrinsicCall>()) return intrinsic(e, *c);
    unsupported(e, "unsupported expression");
  }

  Val binary(const Binary& b) {
    Val l = expr(*b.lhs);
    Val r = expr(*b.rhs);
    if (is_logical(b.op)) {
      int d = new_int();
      Op op = b.op == BinaryOp::And ? Op::LAnd
              : b.op == BinaryOp::Or ? Op::LOr
              : b.op == BinaryOp::Eqv ? Op::LEqv
                                      : Op::LNeqv;
      emit({op, d, l.reg, r.reg});
      return {d, true};
    }
    if (is_relational(b.op)) {
      bool ints = l.is_int && r.is_int;
      int x = ints ? l.reg : as_real(l);
      int y = ints ? r.reg : as_real(r);
      static const std::map<BinaryOp, std::pair<Op, Op>> ops = {
          {BinaryOp::Eq, {Op::IEq, Op::REq}}, {BinaryOp::Ne, {Op::INe, Op::RNe}},
          {BinaryOp::Lt, {Op::ILt, Op::RLt}}, {BinaryOp::Le, {Op::ILe, Op::RLe}},
          {BinaryOp::Gt, {Op::IGt, Op::RGt}}, {BinaryOp::Ge, {Op::IGe, Op::RGe}}};
      auto [iop, rop] = ops.at(b.op);
      int d = new_int();
      emit({ints ? iop : rop, d, x, y});
      return {d, true};
    }
    if (b.op == BinaryOp::Pow) {
      if (l.is_int && r.is_int) {
        int d = new_int();
        emit({Op::IPow, d, l.reg, r.reg});
        return {d, true};
      }
      int d = new_real();
      if (r.is_int) emit({Op::RPowI, d, as_real(l), r.reg});
      else emit({Op::RPow, d, as_real(l), r.reg});
      return {d, false};
    }
    bool ints = l.is_int && r.is_int;
    int x = ints ? l.reg : as_real(l);
    int y = ints ? r.reg : as_real(r);
    Op op;
    switch (b.op) {
    case BinaryOp::Add: op = ints ? Op::IAdd : Op::RAdd; break;
    case BinaryOp::Sub: op = ints ? Op::ISub : Op::RSub; break;
    case BinaryOp::Mul: op = ints ? Op::IMul : Op::RMul; break;
    case BinaryOp::Div: op = ints ? Op::IDiv : Op::RDiv; break;
    default: throw Error(ErrorCode::LoweringFailed, "unexpected operator");
    }
    int d = ints ? new_int() : new_real();
    emit({op, d, x, y});
    return {d, ints};
  }

  Val intrinsic(const Expr& e, const IntrinsicCall& c) {
    std::vector<Val> args;
    for (const auto& a : c.args) args.push_back(expr(*a));
    const std::string& n = c.name;
    auto unary_real = [&](Op op) {
      if (args.size() != 1) unsupported(e, "wrong argument count");
      int d = new_real();
      emit({op, d, as_real(args[0])});
      return Val{d, false};
    };
    if (n == "sqrt") return unary_real(Op::RSqrt);
    if (n == "exp") return unary_real(Op::RExp);
    if (n == "log") return unary_real(Op::RLog);
    if (n == "dble") {
      if (args.size() != 1) unsupported(e, "wrong argument count");
      int d = new_real();
      emit({Op::RMov, d, as_real(args[0])});
      return {d, false};
    }
    if (n == "int") {
      if (args.size() != 1) unsupported(e, "wrong argument count");
      int d = new_int();
      emit({Op::IMov, d, as_int(args[0])});
      return {d, true};
    }
    if (n == "abs") {
      if (args.size() != 1) unsupported(e, "wrong argument count");
      int d = args[0].is_int ? new_int() : new_real();
      emit({args[0].is_int ? Op::IAbs : Op::RAbs, d, args[0].reg});
      return {d, args[0].is_int};
    }
    if (n == "mod") {
      if (args.size() != 2) unsupported(e, "wrong argument count");
      bool ints = args[0].is_int && args[1].is_int;
      int d = ints ? new_int() : new_real();
      if (ints) emit({Op::IMod, d, args[0].reg, args[1].reg});
      else emit({Op::RMod, d, as_real(args[0]), as_real(args[1])});
      return {d, ints};
    }
    if (n == "min" || n == "max") {
      if (args.empty()) unsupported(e, "wrong argument count");
      bool ints = true;
      for (auto& a : args) ints = ints && a.is_int;
      Val acc{ints ? args[0].reg : as_real(args[0]), ints};
      for (std::size_t k = 1; k < args.size(); ++k) {
        int y = ints ? args[k].reg : as_real(args[k]);
        int d = ints ? new_int() : new_real();
        Op op = n == "min" ? (ints ? Op::IMin : Op::RMin) : (ints ? Op::IMax : Op::RMax);
        emit({op, d, acc.reg, y});
        acc.reg = d;
      }
      return acc;
    }
    unsupported(e, "unknown intrinsic");
  }

  void block(const ir::InstrList& prog) {
    for (const auto& in : prog) instr(in);
  }

  void instr(const ir::Instr& in) {
    if (auto* d = in.as<ir::DefineScalar>()) {
      std::string key = lower(d->name);
      Val v = expr(*d->value);
      if (auto it = ints_.find(key); it != ints_.end()) emit({Op::IMov, it->second, as_int(v)});
      else emit({Op::RMov, reals_.at(key), as_real(v)});
    } else if (auto* s = in.as<ir::StoreArray>()) {
      auto it = slots_.find(lower(s->array));
      if (it == slots_.end()) throw Error(ErrorCode::LoweringFailed, "unbound array " + s->array);
      Val v = expr(*s->value);
      int base = indices(s->indices);
      if (out_.arrays_[it->second].is_int) emit({Op::StoreI, as_int(v), it->second, base});
      else emit({Op::StoreR, as_real(v), it->second, base});
    } else if (auto* b = in.as<ir::Branch>()) {
      int c = expr(*b->cond).reg;
      std::size_t jz = emit({Op::Jz, c, 0});
      block(b->then_body);
      if (b->else_body.empty()) {
        out_.code_[jz].b = static_cast<int>(here());
        return;
      }
      std::size_t jmp = emit({Op::Jmp, 0});
      out_.code_[jz].b = static_cast<int>(here());
      block(b->else_body);
      out_.code_[jmp].a = static_cast<int>(here());
    } else if (auto* l = in.as<ir::SeqLoop>()) {
      int v = ints_.at(lower(l->var));
      int lo = as_int(expr(*l->lower));
      int hi_src = as_int(expr(*l->upper));
      int hi = new_int();
      int one = new_int();
      int cond = new_int();
      emit({Op::IMov, hi, hi_src});
      emit({Op::IMov, v, lo});
      emit({Op::IConst, one, 0, 0, 1});
      std::size_t top = here();
      emit({Op::ILe, cond, v, hi});
      std::size_t jz = emit({Op::Jz, cond, 0});
      block(l->body);
      emit({Op::IAdd, v, v, one});
      emit({Op::Jmp, static_cast<int>(top)});
      out_.code_[jz].b = static_cast<int>(here());
    }
  }
};

CompiledKernel::CompiledKernel(const ir::LoopKernel& k) {
  Compiler(k, *this).run();
  bounds_verified_ = ir::check_bounds_static(k) == ir::BoundsStatus::Verified;
}

namespace {

[[noreturn]] void out_of_bounds(const ArrayView& v, int dim, std::int64_t value,
                                const std::int64_t* coords, int naxes) {
  std::string msg = "index " + std::to_string(value) + " outside " + std::to_string(v.lower[dim]) +
                    ":" + std::to_string(v.lower[dim] + v.extent[dim] - 1) + " in dimension " +
                    std::to_string(dim + 1) + " of " + *v.name + " at thread (";
  for (int a = 0; a < naxes; ++a) msg += (a ? "," : "") + std::to_string(coords[a]);
  throw Error(ErrorCode::OutOfBoundsAccess, msg + ")");
}

inline std::int64_t element(const ArrayView& v, const std::int64_t* idx, bool check,
                            const std::int64_t* coords, int naxes) {
  std::int64_t off = 0;
  for (int k = 0; k < v.rank; ++k) {
    std::int64_t d = idx[k] - v.lower[k];
    if (check && (d < 0 || d >= v.extent[k])) out_of_bounds(v, k, idx[k], coords, naxes);
    off += d * v.stride[k];
  }
  return off;
}

} // namespace

void CompiledKernel::run(std::int64_t* I, double* R, const ArrayView* V, bool check,
                         const std::int64_t* coords, int naxes) const {
  const Ins* code = code_.data();
  std::size_t pc = 0;
  for (;;) {
    const Ins& in = code[pc++];
    switch (in.op) {
    case Op::IConst: I[in.a] = in.imm; break;
    case Op::RConst: R[in.a] = in.fimm; break;
    case Op::IMov: I[in.a] = I[in.b]; break;
    case Op::RMov: R[in.a] = R[in.b]; break;
    case Op::I2R: R[in.a] = static_cast<double>(I[in.b]); break;
    case Op::R2I: I[in.a] = arith::to_int(R[in.b]); break;
    case Op::IAdd: I[in.a] = I[in.b] + I[in.c]; break;
    case Op::ISub: I[in.a] = I[in.b] - I[in.c]; break;
    case Op::IMul: I[in.a] = I[in.b] * I[in.c]; break;
    case Op::IDiv: I[in.a] = arith::idiv(I[in.b], I[in.c]); break;
    case Op::IMod: I[in.a] = arith::imod(I[in.b], I[in.c]); break;
    case Op::IPow: I[in.a] = arith::ipow(I[in.b], I[in.c]); break;
    case Op::INeg: I[in.a] = -I[in.b]; break;
    case Op::IAbs: I[in.a] = I[in.b] < 0 ? -I[in.b] : I[in.b]; break;
    case Op::IMin: I[in.a] = std::min(I[in.b], I[in.c]); break;
    case Op::IMax: I[in.a] = std::max(I[in.b], I[in.c]); break;
    case Op::RAdd: R[in.a] = R[in.b] + R[in.c]; break;
    case Op::RSub: R[in.a] = R[in.b] - R[in.c]; break;
    case Op::RMul: R[in.a] = R[in.b] * R[in.c]; break;
    case Op::RDiv: R[in.a] = R[in.b] / R[in.c]; break;
    case Op::RPow: R[in.a] = arith::rpow(R[in.b], R[in.c]); break;
    case Op::RPowI: R[in.a] = arith::rpowi(R[in.b], I[in.c]); break;
    case Op::RNeg: R[in.a] = -R[in.b]; break;
    case Op::RAbs: R[in.a] = std::fabs(R[in.b]); break;
    case Op::RSqrt: R[in.a] = std::sqrt(R[in.b]); break;
    case Op::RExp: R[in.a] = std::exp(R[in.b]); break;
    case Op::RLog: R[in.a] = std::log(R[in.b]); break;
    case Op::RMin: R[in.a] = std::min(R[in.b], R[in.c]); break;
    case Op::RMax: R[in.a] = std::max(R[in.b], R[in.c]); break;
    case Op::RMod: R[in.a] = arith::rmod(R[in.b], R[in.c]); break;
    case Op::IEq: I[in.a] = I[in.b] == I[in.c]; break;
    case Op::INe: I[in.a] = I[in.b] != I[in.c]; break;
    case Op::ILt: I[in.a] = I[in.b] < I[in.c]; break;
    case Op::ILe: I[in.a] = I[in.b] <= I[in.c]; break;
    case Op::IGt: I[in.a] = I[in.b] > I[in.c]; break;
    case Op::IGe: I[in.a] = I[in.b] >= I[in.c]; break;
    case Op::REq: I[in.a] = R[in.b] == R[in.c]; break;
    case Op::RNe: I[in.a] = R[in.b] != R[in.c]; break;
    case Op::RLt: I[in.a] = R[in.b] < R[in.c]; break;
    case Op::RLe: I[in.a] = R[in.b] <= R[in.c]; break;
    case Op::RGt: I[in.a] = R[in.b] > R[in.c]; break;
    case Op::RGe: I[in.a] = R[in.b] >= R[in.c]; break;
    case Op::LAnd: I[in.a] = I[in.b] && I[in.c]; break;
    case Op::LOr: I[in.a] = I[in.b] || I[in.c]; break;
    case Op::LNot: I[in.a] = !I[in.b]; break;
    case Op::LEqv: I[in.a] = (I[in.b] != 0) == (I[in.c] != 0); break;
    case Op::LNeqv: I[in.a] = (I[in.b] != 0) != (I[in.c] != 0); break;
    case Op::LoadR: {
      const ArrayView& v = V[in.b];
      R[in.a] = static_cast<const double*>(v.data)[element(v, I + in.c, check, coords, naxes)];
      break;
    }
    case Op::LoadI: {
      const ArrayView& v = V[in.b];
      I[in.a] = static_cast<const std::int32_t*>(v.data)[element(v, I + in.c, check, coords, naxes)];
      break;
    }
    case Op::StoreR: {
      const ArrayView& v = V[in.b];
      static_cast<double*>(v.data)[element(v, I + in.c, check, coords, naxes)] = R[in.a];
      break;
    }
    case Op::StoreI: {
      const ArrayView& v = V[in.b];
      static_cast<std::int32_t*>(v.data)[element(v, I + in.c, check, coords, naxes)] =
          arith::narrow(I[in.a]);
      break;
    }
    case Op::Jmp: pc = static_cast<std::size_t>(in.a); break;
    case Op::Jz:
      if (!I[in.a]) pc = static_cast<std::size_t>(in.b);
      break;
    case Op::Halt: return;
    }
  }
}

} // namespace loopport::vdev
