// SPDX-License-Identifier: Apache-2.0
#include "loopport/ast.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

namespace loopport::frontend {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const char* spelling(BinaryOp op) {
  switch (op) {
  case BinaryOp::Add: return "+";
  case BinaryOp::Sub: return "-";
  case BinaryOp::Mul: return "*";
  case BinaryOp::Div: return "/";
  case BinaryOp::Pow: return "**";
  case BinaryOp::Eq: return "==";
  case BinaryOp::Ne: return "/=";
  case BinaryOp::Lt: return "<";
  case BinaryOp::Le: return "<=";
  case BinaryOp::Gt: return ">";
  case BinaryOp::Ge: return ">=";
  case BinaryOp::And: return ".and.";
  case BinaryOp::Or: return ".or.";
  case BinaryOp::Eqv: return ".eqv.";
  case BinaryOp::Neqv: return ".neqv.";
  }
  return "?";
}

const char* spelling(UnaryOp op) {
  switch (op) {
  case UnaryOp::Neg: return "-";
  case UnaryOp::Plus: return "+";
  case UnaryOp::Not: return ".not.";
  }
  return "?";
}

bool is_relational(BinaryOp op) {
  return op == BinaryOp::Eq || op == BinaryOp::Ne || op == BinaryOp::Lt || op == BinaryOp::Le ||
         op == BinaryOp::Gt || op == BinaryOp::Ge;
}

bool is_logical(BinaryOp op) {
  return op == BinaryOp::And || op == BinaryOp::Or || op == BinaryOp::Eqv ||
         op == BinaryOp::Neqv;
}

// ---- structural equality ---------------------------------------------------

namespace {

bool same_name(const std::string& a, const std::string& b) { return lower(a) == lower(b); }

bool equal_list(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(a[i], b[i])) return false;
  return true;
}

bool equal_dims(const std::vector<DimSpec>& a, const std::vector<DimSpec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(a[i].lower, b[i].lower) || !equal(a[i].upper, b[i].upper)) return false;
  return true;
}

bool equal_decl(const DeclItem& a, const DeclItem& b) {
  if (a.index() != b.index()) return false;
  if (auto* c = std::get_if<CommentLine>(&a)) return c->text == std::get<CommentLine>(b).text;
  if (std::holds_alternative<ImplicitNone>(a)) return true;
  const auto& x = std::get<Declaration>(a);
  const auto& y = std::get<Declaration>(b);
  if (x.type != y.type || x.parameter != y.parameter || x.intent != y.intent ||
      !equal_dims(x.dimension, y.dimension) || x.entities.size() != y.entities.size())
    return false;
  for (std::size_t i = 0; i < x.entities.size(); ++i) {
    const auto& e = x.entities[i];
    const auto& f = y.entities[i];
    if (!same_name(e.name, f.name) || !equal_dims(e.dims, f.dims) || !equal(e.init, f.init))
      return false;
  }
  return true;
}

} // namespace

bool equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return equal(*a, *b);
}

bool equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index() || a.type != b.type) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, IntLit> || std::is_same_v<T, LogicalLit>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, RealLit>) {
          // Bit equality, so that -0.0 and NaN payloads are compared exactly.
          return std::memcmp(&x.value, &y.value, sizeof(double)) == 0;
        } else if constexpr (std::is_same_v<T, ScalarRef>) {
          return same_name(x.name, y.name);
        } else if constexpr (std::is_same_v<T, ArrayRef>) {
          return same_name(x.name, y.name) && equal_list(x.indices, y.indices);
        } else if constexpr (std::is_same_v<T, IntrinsicCall>) {
          return x.name == y.name && equal_list(x.args, y.args);
        } else if constexpr (std::is_same_v<T, Unary>) {
          return x.op == y.op && equal(x.operand, y.operand);
        } else {
          return x.op == y.op && equal(x.lhs, y.lhs) && equal(x.rhs, y.rhs);
        }
      },
      a.node);
}

bool equal(const StmtList& a, const StmtList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(a[i], b[i])) return false;
  return true;
}

bool equal(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Assign>) {
          return equal(x.target, y.target) && equal(x.value, y.value);
        } else if constexpr (std::is_same_v<T, DoLoop>) {
          return same_name(x.var, y.var) && equal(x.lower, y.lower) && equal(x.upper, y.upper) &&
                 equal(x.body, y.body);
        } else if constexpr (std::is_same_v<T, IfBlock>) {
          return equal(x.cond, y.cond) && equal(x.then_body, y.then_body) &&
                 equal(x.else_body, y.else_body);
        } else if constexpr (std::is_same_v<T, CallStmt>) {
          return same_name(x.name, y.name) && equal_list(x.args, y.args);
        } else if constexpr (std::is_same_v<T, ReturnStmt>) {
          return true;
        } else {
          return x.text == y.text;
        }
      },
      a.node);
}

bool equal(const Subroutine& a, const Subroutine& b) {
  if (!same_name(a.name, b.name) || a.params.size() != b.params.size() ||
      a.decls.size() != b.decls.size())
    return false;
  for (std::size_t i = 0; i < a.params.size(); ++i)
    if (!same_name(a.params[i], b.params[i])) return false;
  for (std::size_t i = 0; i < a.decls.size(); ++i)
    if (!equal_decl(a.decls[i], b.decls[i])) return false;
  return equal(a.body, b.body);
}

// ---- printing ----------------------------------------------------------------

std::string format_real(double value) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, p);
  auto e = s.find('e');
  std::string mantissa = e == std::string::npos ? s : s.substr(0, e);
  std::string exponent = e == std::string::npos ? "0" : s.substr(e + 1);
  if (mantissa.find('.') == std::string::npos) mantissa += ".0";
  return mantissa + "d" + exponent;
}

namespace {

// Binding strength; higher binds tighter.
int precedence(const Expr& e) {
  if (auto* b = e.as<Binary>()) {
    switch (b->op) {
    case BinaryOp::Eqv: case BinaryOp::Neqv: return 1;
    case BinaryOp::Or: return 2;
    case BinaryOp::And: return 3;
    case BinaryOp::Add: case BinaryOp::Sub: return 6;
    case BinaryOp::Mul: case BinaryOp::Div: return 7;
    case BinaryOp::Pow: return 8;
    default: return 5; // relational
    }
  }
  if (auto* u = e.as<Unary>()) return u->op == UnaryOp::Not ? 4 : 6;
  return 10;
}

void print_expr(const Expr& e, std::string& out);

void print_child(const Expr& child, int parent_prec, bool force_paren_at_equal,
                 std::string& out) {
  int p = precedence(child);
  bool paren = p < parent_prec || (p == parent_prec && force_paren_at_equal);
  if (paren) out += '(';
  print_expr(child, out);
  if (paren) out += ')';
}

void print_list(const std::vector<ExprPtr>& xs, std::string& out) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    print_expr(*xs[i], out);
  }
}

void print_expr(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, IntLit>) {
          out += std::to_string(x.value);
        } else if constexpr (std::is_same_v<T, RealLit>) {
          out += format_real(x.value);
        } else if constexpr (std::is_same_v<T, LogicalLit>) {
          out += x.value ? ".true." : ".false.";
        } else if constexpr (std::is_same_v<T, ScalarRef>) {
          out += x.name;
        } else if constexpr (std::is_same_v<T, ArrayRef>) {
          out += x.name;
          out += '(';
          print_list(x.indices, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, IntrinsicCall>) {
          std::string up = x.name;
          std::transform(up.begin(), up.end(), up.begin(),
                         [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
          out += up;
          out += '(';
          print_list(x.args, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, Unary>) {
          out += spelling(x.op);
          if (x.op == UnaryOp::Not) out += ' ';
          // Operand of a sign binds at multiplicative level: -(a+b), -a*b.
          print_child(*x.operand, x.op == UnaryOp::Not ? 4 : 7, false, out);
        } else {
          int p = precedence(e);
          bool pow = x.op == BinaryOp::Pow;
          bool rel = is_relational(x.op);
          // ** is right-associative and relationals do not chain.
          print_child(*x.lhs, p, pow || rel, out);
          if (is_logical(x.op)) {
            out += ' ';
            out += spelling(x.op);
            out += ' ';
          } else {
            out += spelling(x.op);
          }
          print_child(*x.rhs, p, !pow, out);
        }
      },
      e.node);
}

std::string pad(int indent) { return std::string(static_cast<std::size_t>(indent) * 2, ' '); }

std::string print_dims(const std::vector<DimSpec>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    if (dims[i].lower) {
      out += pretty_print(*dims[i].lower);
      out += ':';
    }
    out += pretty_print(*dims[i].upper);
  }
  return out;
}

void print_stmt(const Stmt& s, int indent, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Assign>) {
          out += pad(indent) + pretty_print(*x.target) + " = " + pretty_print(*x.value) + "\n";
        } else if constexpr (std::is_same_v<T, DoLoop>) {
          out += pad(indent) + "DO " + x.var + " = " + pretty_print(*x.lower) + ", " +
                 pretty_print(*x.upper) + "\n";
          for (const auto& c : x.body) print_stmt(c, indent + 1, out);
          out += pad(indent) + "ENDDO\n";
        } else if constexpr (std::is_same_v<T, IfBlock>) {
          out += pad(indent) + "IF (" + pretty_print(*x.cond) + ") THEN\n";
          for (const auto& c : x.then_body) print_stmt(c, indent + 1, out);
          if (!x.else_body.empty()) {
            out += pad(indent) + "ELSE\n";
            for (const auto& c : x.else_body) print_stmt(c, indent + 1, out);
          }
          out += pad(indent) + "ENDIF\n";
        } else if constexpr (std::is_same_v<T, CallStmt>) {
          out += pad(indent) + "CALL " + x.name + "(";
          for (std::size_t i = 0; i < x.args.size(); ++i) {
            if (i) out += ", ";
            out += pretty_print(*x.args[i]);
          }
          out += ")\n";
        } else if constexpr (std::is_same_v<T, ReturnStmt>) {
          out += pad(indent) + "RETURN\n";
        } else {
          out += pad(indent) + x.text + "\n";
        }
      },
      s.node);
}

} // namespace

std::string pretty_print(const Expr& expr) {
  std::string out;
  print_expr(expr, out);
  return out;
}

std::string pretty_print(const Stmt& stmt, int indent) {
  std::string out;
  print_stmt(stmt, indent, out);
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string pretty_print(const StmtList& stmts, int indent) {
  std::string out;
  for (const auto& s : stmts) print_stmt(s, indent, out);
  return out;
}

std::string pretty_print(const Subroutine& sub) {
  std::string out = "SUBROUTINE " + sub.name + "(";
  for (std::size_t i = 0; i < sub.params.size(); ++i) {
    if (i) out += ", ";
    out += sub.params[i];
  }
  out += ")\n";
  for (const auto& d : sub.decls) {
    if (auto* c = std::get_if<CommentLine>(&d)) {
      out += pad(1) + c->text + "\n";
      continue;
    }
    if (std::holds_alternative<ImplicitNone>(d)) {
      out += pad(1) + "IMPLICIT NONE\n";
      continue;
    }
    const auto& decl = std::get<Declaration>(d);
    out += pad(1) + (decl.type == BaseType::Integer ? "INTEGER" : "REAL(kind=8)");
    if (decl.parameter) out += ", PARAMETER";
    if (!decl.dimension.empty()) out += ", DIMENSION(" + print_dims(decl.dimension) + ")";
    switch (decl.intent) {
    case Intent::In: out += ", INTENT(IN)"; break;
    case Intent::Out: out += ", INTENT(OUT)"; break;
    case Intent::InOut: out += ", INTENT(INOUT)"; break;
    case Intent::None: break;
    }
    out += " :: ";
    for (std::size_t i = 0; i < decl.entities.size(); ++i) {
      const auto& e = decl.entities[i];
      if (i) out += ", ";
      out += e.name;
      if (!e.dims.empty()) out += "(" + print_dims(e.dims) + ")";
      if (e.init) out += " = " + pretty_print(*e.init);
    }
    out += "\n";
  }
  out += pretty_print(sub.body, 1);
  out += "END SUBROUTINE " + sub.name + "\n";
  return out;
}

} // namespace loopport::frontend
