// SPDX-License-Identifier: Apache-2.0
// Textual kernel dump. Grammar in docs/kernel_dump.md.
#include <set>

#include "loopport/loopir.hpp"

namespace loopport::ir {

using namespace frontend;

namespace {

const char* type_name(BaseType t) { return t == BaseType::Integer ? "int32" : "real64"; }

const char* intent_name(Intent i) {
  switch (i) {
  case Intent::In: return " intent(in)";
  case Intent::Out: return " intent(out)";
  case Intent::InOut: return " intent(inout)";
  case Intent::None: break;
  }
  return "";
}

std::string pad(int depth) { return std::string(2 * depth, ' '); }

void loads_of(const ExprPtr& e, std::vector<std::string>& out, std::set<std::string>& seen) {
  walk_postorder(e, [&](const ExprPtr& n) {
    if (n->as<ArrayRef>()) {
      std::string t = compact(*n);
      if (seen.insert(t).second) out.push_back(t);
    }
  });
}

void emit_loads(const std::vector<ExprPtr>& exprs, int depth, std::string& out) {
  std::vector<std::string> loads;
  std::set<std::string> seen;
  for (const auto& e : exprs) loads_of(e, loads, seen);
  for (const auto& l : loads) out += pad(depth) + "load " + l + "\n";
}

void emit_instrs(const InstrList& prog, int depth, std::string& out) {
  for (const Instr& in : prog) {
    if (auto* d = in.as<DefineScalar>()) {
      emit_loads({d->value}, depth, out);
      out += pad(depth) + "define " + d->name + " = " + compact(*d->value) + "\n";
    } else if (auto* s = in.as<StoreArray>()) {
      std::vector<ExprPtr> exprs = s->indices;
      exprs.push_back(s->value);
      emit_loads(exprs, depth, out);
      std::string target = s->array + "(";
      for (std::size_t k = 0; k < s->indices.size(); ++k)
        target += (k ? "," : "") + compact(*s->indices[k]);
      out += pad(depth) + "store " + target + ") = " + compact(*s->value) + "\n";
    } else if (auto* b = in.as<Branch>()) {
      emit_loads({b->cond}, depth, out);
      out += pad(depth) + "if " + compact(*b->cond) + "\n";
      emit_instrs(b->then_body, depth + 1, out);
      if (!b->else_body.empty()) {
        out += pad(depth) + "else\n";
        emit_instrs(b->else_body, depth + 1, out);
      }
      out += pad(depth) + "end if\n";
    } else if (auto* l = in.as<SeqLoop>()) {
      emit_loads({l->lower, l->upper}, depth, out);
      out += pad(depth) + "loop " + l->var + ": " + compact(*l->lower) + " .. " +
             compact(*l->upper) + "\n";
      emit_instrs(l->body, depth + 1, out);
      out += pad(depth) + "end loop\n";
    }
  }
}

std::string const_text(const ConstValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return format_real(std::get<double>(v));
}

} // namespace

std::string emit_kernel_text(const LoopKernel& k) {
  std::string out = "kernel " + k.name + "\n";
  for (const auto& p : k.params) {
    out += std::string("param ") + (p.is_array ? "array " : "scalar ") + p.name + " " +
           type_name(p.type);
    if (p.is_array) {
      out += " (";
      for (std::size_t d = 0; d < p.bounds.size(); ++d) {
        out += d ? ", " : "";
        out += (p.bounds[d].lower ? compact(*p.bounds[d].lower) : std::string("1")) + ":" +
               compact(*p.bounds[d].upper);
      }
      out += ")";
    }
    out += std::string(intent_name(p.intent)) + "\n";
  }
  for (const auto& c : k.constants) out += "const " + c.name + " = " + const_text(c.value) + "\n";
  for (const auto& a : k.assumptions) out += "assume " + regions::to_string(a) + "\n";
  for (const auto& p : k.privates) out += "private " + p.name + " " + type_name(p.type) + "\n";
  for (std::size_t d = 0; d < k.domains.size(); ++d) {
    const Domain& dom = k.domains[d];
    out += "domain " + dom.var + ": " + compact(*dom.lower) + " .. " + compact(*dom.upper);
    if (static_cast<int>(d) < k.grid_axes) out += " [grid axis " + std::to_string(d) + "]";
    else if (k.grid_axes > 0) out += " [thread loop]";
    out += "\n";
  }
  for (const auto& w : k.warnings)
    out += "warning " + w.code + " line " + std::to_string(w.line) + ": " + w.message + "\n";
  InstrList prog = thread_program(k);
  if (!prog.empty()) {
    out += "body\n";
    emit_instrs(prog, 1, out);
  }
  out += "end kernel\n";
  return out;
}

} // namespace loopport::ir
