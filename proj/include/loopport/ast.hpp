// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace loopport::frontend {

enum class ValueType { Integer, Real, Logical };

enum class BinaryOp { Add, Sub, Mul, Div, Pow, Eq, Ne, Lt, Le, Gt, Ge, And, Or, Eqv, Neqv };
enum class UnaryOp { Neg, Plus, Not };

const char* spelling(BinaryOp op);
const char* spelling(UnaryOp op);
bool is_relational(BinaryOp op);
bool is_logical(BinaryOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct IntLit {
  std::int64_t value;
};
struct RealLit {
  double value;
};
struct LogicalLit {
  bool value;
};
/// Reference to a scalar, or to a whole array when passed as a CALL argument.
struct ScalarRef {
  std::string name;
};
struct ArrayRef {
  std::string name;
  std::vector<ExprPtr> indices;
};
/// `name` is stored lowercased.
struct IntrinsicCall {
  std::string name;
  std::vector<ExprPtr> args;
};
struct Unary {
  UnaryOp op;
  ExprPtr operand;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};

struct Expr {
  using Node = std::variant<IntLit, RealLit, LogicalLit, ScalarRef, ArrayRef, IntrinsicCall,
                            Unary, Binary>;
  Node node;
  ValueType type = ValueType::Integer;
  int line = 0;

  template <class T> const T* as() const { return std::get_if<T>(&node); }
};

template <class T> ExprPtr make_expr(T node, ValueType type, int line = 0) {
  return std::make_shared<const Expr>(Expr{std::move(node), type, line});
}

struct Stmt;
using StmtList = std::vector<Stmt>;

struct Assign {
  ExprPtr target; // ScalarRef or ArrayRef
  ExprPtr value;
};
struct DoLoop {
  std::string var;
  ExprPtr lower;
  ExprPtr upper;
  StmtList body;
};
struct IfBlock {
  ExprPtr cond;
  StmtList then_body;
  StmtList else_body;
};
struct CallStmt {
  std::string name;
  std::vector<ExprPtr> args;
};
struct ReturnStmt {};
struct CommentLine {
  std::string text; // including the leading '!'
};

struct Stmt {
  using Node = std::variant<Assign, DoLoop, IfBlock, CallStmt, ReturnStmt, CommentLine>;
  Node node;
  int first_line = 0;
  int last_line = 0;

  template <class T> const T* as() const { return std::get_if<T>(&node); }
  template <class T> T* as() { return std::get_if<T>(&node); }
};

enum class BaseType { Integer, Real64 };
enum class Intent { None, In, Out, InOut };

/// One dimension of a declared array. A null `lower` means the implicit 1.
struct DimSpec {
  ExprPtr lower;
  ExprPtr upper;
};

struct Entity {
  std::string name;
  std::vector<DimSpec> dims;
  ExprPtr init;
  int line = 0;
};

struct Declaration {
  BaseType type = BaseType::Integer;
  bool parameter = false;
  std::vector<DimSpec> dimension;
  Intent intent = Intent::None;
  std::vector<Entity> entities;
  int line = 0;
};

struct ImplicitNone {
  int line = 0;
};

using DeclItem = std::variant<Declaration, CommentLine, ImplicitNone>;

struct Subroutine {
  std::string name;
  std::vector<std::string> params;
  std::vector<DeclItem> decls;
  StmtList body;
  int first_line = 0;
  int last_line = 0;
};

/// Structural equality: ignores line spans, compares names case-insensitively.
bool equal(const Expr& a, const Expr& b);
bool equal(const ExprPtr& a, const ExprPtr& b);
bool equal(const Stmt& a, const Stmt& b);
bool equal(const StmtList& a, const StmtList& b);
bool equal(const Subroutine& a, const Subroutine& b);

std::string lower(std::string_view s);

/// Canonical source text. Parsing the output yields a structurally equal AST.
std::string pretty_print(const Subroutine& sub);
std::string pretty_print(const Stmt& stmt, int indent = 0);
std::string pretty_print(const StmtList& stmts, int indent = 0);
std::string pretty_print(const Expr& expr);
std::string format_real(double value);

/// Calls `fn` on every expression node below `e` in evaluation order (children first).
template <class Fn> void walk_postorder(const ExprPtr& e, Fn&& fn);

} // namespace loopport::frontend

#include "loopport/detail/ast_walk.hpp"
