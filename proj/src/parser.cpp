// SPDX-License-Identifier: Apache-2.0
#include "loopport/parser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "loopport/error.hpp"

namespace loopport::frontend {

namespace {

/// One statement after joining `&` continuations and dropping trailing comments.
struct LogicalLine {
  std::vector<Token> tokens;
  int first_line = 0;
  int last_line = 0;
  bool comment_only = false;
  std::string comment; // text when comment_only
};

std::vector<LogicalLine> split_lines(std::span<const Token> tokens) {
  std::vector<LogicalLine> out;
  LogicalLine cur;
  bool continuing = false;
  bool line_has_code = false;
  std::optional<Token> line_comment;

  auto flush = [&] {
    if (!cur.tokens.empty()) {
      out.push_back(std::move(cur));
    }
    cur = LogicalLine{};
  };

  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    bool eol = i == tokens.size() || tokens[i].kind == TokenKind::EndOfLine;
    if (!eol) {
      const Token& t = tokens[i];
      if (t.kind == TokenKind::Comment) {
        line_comment = t;
        continue;
      }
      if (cur.tokens.empty() && !continuing) cur.first_line = t.line;
      // A leading '&' on a continuation line is optional and carries no meaning.
      if (continuing && !line_has_code && t.is(TokenKind::Punctuation, "&")) {
        line_has_code = true;
        continue;
      }
      line_has_code = true;
      cur.tokens.push_back(t);
      cur.last_line = t.line;
      continue;
    }
    // End of a physical line.
    bool trailing_amp = !cur.tokens.empty() && cur.tokens.back().is(TokenKind::Punctuation, "&");
    if (!line_has_code && line_comment && !continuing) {
      LogicalLine c;
      c.first_line = c.last_line = line_comment->line;
      c.comment_only = true;
      c.comment = line_comment->text;
      out.push_back(std::move(c));
    } else if (trailing_amp) {
      cur.tokens.pop_back();
      continuing = true;
    } else if (line_has_code) {
      continuing = false;
      flush();
    }
    line_has_code = false;
    line_comment.reset();
  }
  if (continuing && !cur.tokens.empty()) {
    throw Error(ErrorCode::ParseError, "expected continuation line, found end of input",
                cur.last_line);
  }
  flush();
  return out;
}

std::int64_t parse_int_text(const Token& t) {
  std::string digits;
  for (char c : t.text) {
    if (c == '_') break;
    digits += c;
  }
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc{})
    throw Error(ErrorCode::LexError, "integer literal out of range: " + t.text, t.line, t.column);
  return v;
}

double parse_real_text(const Token& t) {
  std::string s;
  for (char c : t.text) {
    if (c == '_') break;
    s += (c == 'd' || c == 'D') ? 'e' : c;
  }
  if (!s.empty() && s.front() == '.') s.insert(s.begin(), '0');
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorCode::LexError, "malformed real literal: " + t.text, t.line, t.column);
  return v;
}

ValueType promote(ValueType a, ValueType b) {
  return (a == ValueType::Real || b == ValueType::Real) ? ValueType::Real : ValueType::Integer;
}

std::optional<ConstValue> fold_constant(const Expr& e, const SymbolTable& syms);

class Parser {
public:
  explicit Parser(std::vector<LogicalLine> lines) : lines_(std::move(lines)) {}

  bool at_end() {
    skip_stray_comments();
    return idx_ >= lines_.size();
  }

  ParsedUnit unit() {
    skip_stray_comments();
    if (idx_ >= lines_.size())
      throw Error(ErrorCode::ParseError, "expected SUBROUTINE, found end of input", 0);
    ParsedUnit out;
    syms_ = SymbolTable{};
    header(out.sub);
    declarations(out.sub);
    out.sub.body = block({"end"}, out.sub);
    end_subroutine(out.sub);
    check_params_declared(out.sub);
    out.symbols = std::move(syms_);
    return out;
  }

private:
  // ---- line / token cursor -------------------------------------------------
  void skip_stray_comments() {
    while (idx_ < lines_.size() && lines_[idx_].comment_only) ++idx_;
  }

  void begin_line() {
    pos_ = 0;
    line_no_ = lines_[idx_].first_line;
  }
  const std::vector<Token>& toks() const { return lines_[idx_].tokens; }
  bool more() const { return pos_ < toks().size(); }
  const Token* peek(std::size_t off = 0) const {
    return pos_ + off < toks().size() ? &toks()[pos_ + off] : nullptr;
  }
  int cur_line() const { return more() ? toks()[pos_].line : lines_[idx_].last_line; }

  [[noreturn]] void fail(const std::string& expected) const {
    std::string found = more() ? "'" + toks()[pos_].text + "'" : "end of statement";
    throw Error(ErrorCode::ParseError, "expected " + expected + ", found " + found, cur_line());
  }

  bool accept(TokenKind k, std::string_view low) {
    if (more() && toks()[pos_].is(k, low)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_punct(std::string_view p) { return accept(TokenKind::Punctuation, p); }
  bool accept_op(std::string_view p) { return accept(TokenKind::Operator, p); }
  bool accept_kw(std::string_view p) { return accept(TokenKind::Keyword, p); }
  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) fail("'" + std::string(p) + "'");
  }
  void expect_kw(std::string_view p) {
    if (!accept_kw(p)) fail(std::string(p));
  }
  std::string expect_ident(const char* what = "identifier") {
    if (more() && toks()[pos_].kind == TokenKind::Identifier) return toks()[pos_++].text;
    fail(what);
  }
  void expect_eos() {
    if (more()) fail("end of statement");
  }

  // ---- unit structure ------------------------------------------------------
  void header(Subroutine& sub) {
    begin_line();
    if (!accept_kw("subroutine")) {
      if (more() && toks()[pos_].kind == TokenKind::Keyword &&
          (toks()[pos_].lower() == "function" || toks()[pos_].lower() == "program" ||
           toks()[pos_].lower() == "module"))
        throw Error(ErrorCode::UnsupportedConstruct, toks()[pos_].lower(), cur_line());
      fail("SUBROUTINE");
    }
    sub.first_line = lines_[idx_].first_line;
    sub.name = expect_ident("subroutine name");
    if (accept_punct("(")) {
      if (!accept_punct(")")) {
        do {
          sub.params.push_back(expect_ident("dummy argument name"));
        } while (accept_punct(","));
        expect_punct(")");
      }
    }
    expect_eos();
    ++idx_;
  }

  static bool is_decl_line(const LogicalLine& l) {
    if (l.comment_only || l.tokens.empty()) return false;
    const Token& t = l.tokens.front();
    return t.is(TokenKind::Keyword, "integer") || t.is(TokenKind::Keyword, "real") ||
           t.is(TokenKind::Keyword, "implicit") || t.is(TokenKind::Keyword, "logical") ||
           t.is(TokenKind::Keyword, "character") || t.is(TokenKind::Keyword, "type");
  }

  void declarations(Subroutine& sub) {
    std::vector<CommentLine> pending;
    std::vector<int> pending_lines;
    while (idx_ < lines_.size()) {
      const LogicalLine& l = lines_[idx_];
      if (l.comment_only) {
        pending.push_back(CommentLine{l.comment});
        pending_lines.push_back(l.first_line);
        ++idx_;
        continue;
      }
      if (!is_decl_line(l)) break;
      for (auto& c : pending) sub.decls.emplace_back(std::move(c));
      pending.clear();
      pending_lines.clear();
      begin_line();
      if (accept_kw("implicit")) {
        expect_kw("none");
        expect_eos();
        sub.decls.emplace_back(ImplicitNone{l.first_line});
      } else {
        sub.decls.emplace_back(declaration(sub));
      }
      ++idx_;
    }
    // Comments after the last declaration belong to the body.
    idx_ -= pending.size();
  }

  Declaration declaration(const Subroutine& sub) {
    Declaration d;
    d.line = line_no_;
    if (accept_kw("integer")) {
      d.type = BaseType::Integer;
      if (accept_punct("(")) kind_selector(4);
    } else if (accept_kw("real")) {
      d.type = BaseType::Real64;
      if (!accept_punct("("))
        throw Error(ErrorCode::UnsupportedConstruct, "default-kind REAL (use REAL(kind=8))",
                    line_no_);
      kind_selector(8);
    } else {
      throw Error(ErrorCode::UnsupportedConstruct, toks()[pos_].lower() + " declaration",
                  line_no_);
    }
    while (accept_punct(",")) {
      if (accept_kw("parameter")) {
        d.parameter = true;
      } else if (accept_kw("dimension")) {
        expect_punct("(");
        d.dimension = dim_specs();
        expect_punct(")");
      } else if (accept_kw("intent")) {
        expect_punct("(");
        std::string which = more() ? toks()[pos_].lower() : "";
        if (which == "in") {
          ++pos_;
          d.intent = Intent::In;
        } else if (which == "out") {
          ++pos_;
          d.intent = Intent::Out;
        } else if (which == "inout") {
          ++pos_;
          d.intent = Intent::InOut;
        } else {
          fail("IN, OUT or INOUT");
        }
        expect_punct(")");
      } else if (more() && toks()[pos_].kind == TokenKind::Keyword) {
        throw Error(ErrorCode::UnsupportedConstruct, "attribute " + toks()[pos_].lower(),
                    line_no_);
      } else {
        fail("declaration attribute");
      }
    }
    accept_punct("::");
    do {
      Entity e;
      e.line = cur_line();
      e.name = expect_ident("entity name");
      if (accept_punct("(")) {
        e.dims = dim_specs();
        expect_punct(")");
      }
      if (accept_op("=")) {
        e.init = expr();
      }
      d.entities.push_back(std::move(e));
    } while (accept_punct(","));
    expect_eos();
    register_declaration(d, sub);
    return d;
  }

  void kind_selector(int required) {
    // Accepts (kind=N) or (N).
    if (more() && toks()[pos_].kind == TokenKind::Identifier && toks()[pos_].lower() == "kind") {
      ++pos_;
      if (!accept_op("=")) fail("'='");
    }
    if (!more() || toks()[pos_].kind != TokenKind::IntegerLiteral) fail("kind value");
    auto k = parse_int_text(toks()[pos_]);
    if (k != required)
      throw Error(ErrorCode::UnsupportedConstruct, "kind=" + std::to_string(k), line_no_);
    ++pos_;
    expect_punct(")");
  }

  std::vector<DimSpec> dim_specs() {
    std::vector<DimSpec> dims;
    do {
      DimSpec d;
      ExprPtr first = expr();
      if (accept_punct(":")) {
        d.lower = first;
        d.upper = expr();
      } else {
        d.upper = first;
      }
      for (auto* p : {&d.lower, &d.upper})
        if (*p && (*p)->type != ValueType::Integer)
          throw Error(ErrorCode::TypeError, "array bounds must be integer", line_no_);
      dims.push_back(std::move(d));
    } while (accept_punct(","));
    return dims;
  }

  void register_declaration(const Declaration& d, const Subroutine& sub) {
    for (const auto& e : d.entities) {
      Symbol s;
      s.name = e.name;
      s.type = d.type;
      s.intent = d.intent;
      s.bounds = e.dims.empty() ? d.dimension : e.dims;
      s.kind = s.bounds.empty() ? SymbolKind::Scalar : SymbolKind::Array;
      s.line = e.line;
      s.order = static_cast<int>(syms_.size());
      for (std::size_t i = 0; i < sub.params.size(); ++i)
        if (lower(sub.params[i]) == lower(e.name)) s.dummy_position = static_cast<int>(i);
      if (d.parameter) {
        if (!e.init)
          throw Error(ErrorCode::ParseError, "PARAMETER " + e.name + " needs a value", e.line);
        if (s.kind == SymbolKind::Array)
          throw Error(ErrorCode::UnsupportedConstruct, "array PARAMETER", e.line);
        auto v = fold_constant(*e.init, syms_);
        if (!v)
          throw Error(ErrorCode::ParseError,
                      "PARAMETER " + e.name + " is not a compile-time constant", e.line);
        if (d.type == BaseType::Integer && std::holds_alternative<double>(*v))
          v = static_cast<std::int64_t>(std::get<double>(*v));
        if (d.type == BaseType::Real64 && std::holds_alternative<std::int64_t>(*v))
          v = static_cast<double>(std::get<std::int64_t>(*v));
        s.constant = v;
      } else if (e.init) {
        throw Error(ErrorCode::UnsupportedConstruct, "initialized variable (implicit SAVE)",
                    e.line);
      }
      if (s.kind == SymbolKind::Array && !s.is_dummy())
        throw Error(ErrorCode::UnsupportedConstruct,
                    "local array " + e.name + " (kernels perform no allocation)", e.line);
      if (s.is_dummy() && s.constant)
        throw Error(ErrorCode::ParseError, "dummy argument " + e.name + " cannot be PARAMETER",
                    e.line);
      syms_.add(std::move(s));
    }
  }

  void check_params_declared(const Subroutine& sub) {
    for (const auto& p : sub.params) syms_.at(p, sub.first_line);
  }

  void end_subroutine(Subroutine& sub) {
    if (idx_ >= lines_.size())
      throw Error(ErrorCode::ParseError, "expected END SUBROUTINE, found end of input",
                  lines_.empty() ? 0 : lines_.back().last_line);
    begin_line();
    expect_kw("end");
    if (accept_kw("subroutine")) {
      if (more()) {
        std::string nm = expect_ident("subroutine name");
        if (lower(nm) != lower(sub.name))
          throw Error(ErrorCode::ParseError, "expected END SUBROUTINE " + sub.name + ", found " + nm,
                      line_no_);
      }
    }
    expect_eos();
    sub.last_line = lines_[idx_].last_line;
    ++idx_;
  }

  // ---- statements ----------------------------------------------------------
  // Returns true if the current line closes a block with one of `enders`.
  bool is_block_end(const std::set<std::string>& enders) {
    const LogicalLine& l = lines_[idx_];
    if (l.comment_only || l.tokens.empty()) return false;
    const Token& t = l.tokens.front();
    if (t.kind != TokenKind::Keyword) return false;
    std::string w = t.lower();
    if (w == "end" && l.tokens.size() >= 2) {
      std::string second = l.tokens[1].lower();
      if (second == "do") w = "enddo";
      else if (second == "if") w = "endif";
      else if (second == "subroutine") w = "end";
    }
    return enders.count(w) > 0;
  }

  StmtList block(const std::set<std::string>& enders, const Subroutine& sub) {
    StmtList out;
    while (true) {
      if (idx_ >= lines_.size()) {
        int ln = lines_.empty() ? 0 : lines_.back().last_line;
        throw Error(ErrorCode::ParseError,
                    "expected " + std::string(enders.count("enddo") ? "ENDDO"
                                              : enders.count("endif") ? "ENDIF"
                                                                       : "END SUBROUTINE") +
                        ", found end of input",
                    ln);
      }
      if (is_block_end(enders)) return out;
      const LogicalLine& l = lines_[idx_];
      if (l.comment_only) {
        out.push_back(Stmt{CommentLine{l.comment}, l.first_line, l.last_line});
        ++idx_;
        continue;
      }
      out.push_back(statement(sub));
    }
  }

  Stmt statement(const Subroutine& sub) {
    begin_line();
    const int first = lines_[idx_].first_line;
    const Token& t = toks()[0];
    if (is_decl_line(lines_[idx_]))
      throw Error(ErrorCode::ParseError, "declaration after executable statement", first);
    if (t.kind == TokenKind::IntegerLiteral)
      throw Error(ErrorCode::UnsupportedConstruct, "statement label", first);
    if (t.kind == TokenKind::Identifier && t.lower() == "go" && toks().size() > 1 &&
        toks()[1].lower() == "to")
      throw Error(ErrorCode::UnsupportedConstruct, "goto", first);
    if (t.kind == TokenKind::Keyword) {
      std::string w = t.lower();
      if (w == "do") return do_loop(sub);
      if (w == "if") return if_block(sub);
      if (w == "call") {
        Stmt s = simple_statement();
        ++idx_;
        return s;
      }
      if (w == "return") {
        ++pos_;
        expect_eos();
        ++idx_;
        return Stmt{ReturnStmt{}, first, first};
      }
      if (w == "else" || w == "enddo" || w == "endif" || w == "end")
        throw Error(ErrorCode::ParseError, "unexpected " + t.text, first);
      throw Error(ErrorCode::UnsupportedConstruct, w, first);
    }
    Stmt s = simple_statement();
    ++idx_;
    return s;
  }

  // Assignment or CALL, starting at pos_ on the current line.
  Stmt simple_statement() {
    const int first = lines_[idx_].first_line;
    const int last = lines_[idx_].last_line;
    if (accept_kw("call")) {
      CallStmt c;
      c.name = expect_ident("subroutine name");
      if (accept_punct("(")) {
        if (!accept_punct(")")) {
          do {
            c.args.push_back(call_argument());
          } while (accept_punct(","));
          expect_punct(")");
        }
      }
      expect_eos();
      return Stmt{std::move(c), first, last};
    }
    if (more() && toks()[pos_].kind == TokenKind::Keyword) {
      std::string w = toks()[pos_].lower();
      if (w == "return") {
        ++pos_;
        expect_eos();
        return Stmt{ReturnStmt{}, first, last};
      }
      throw Error(ErrorCode::UnsupportedConstruct, w, first);
    }
    if (!more() || toks()[pos_].kind != TokenKind::Identifier) fail("statement");
    ExprPtr target = designator();
    const std::string& tname = target->as<ScalarRef>() ? target->as<ScalarRef>()->name
                                                        : target->as<ArrayRef>()->name;
    if (target->as<IntrinsicCall>())
      throw Error(ErrorCode::ParseError, "cannot assign to intrinsic", first);
    const Symbol& sym = syms_.at(tname, first);
    if (sym.constant)
      throw Error(ErrorCode::TypeError, "assignment to PARAMETER " + sym.name, first);
    if (!accept_op("=")) fail("'='");
    ExprPtr value = expr();
    expect_eos();
    if (value->type == ValueType::Logical)
      throw Error(ErrorCode::TypeError, "logical value assigned to numeric variable", first);
    return Stmt{Assign{std::move(target), std::move(value)}, first, last};
  }

  Stmt do_loop(const Subroutine& sub) {
    const int first = lines_[idx_].first_line;
    expect_kw("do");
    if (more() && toks()[pos_].is(TokenKind::Keyword, "while"))
      throw Error(ErrorCode::UnsupportedConstruct, "do while", first);
    DoLoop d;
    d.var = expect_ident("loop variable");
    const Symbol& v = syms_.at(d.var, first);
    if (v.kind != SymbolKind::Scalar || v.type != BaseType::Integer || v.constant)
      throw Error(ErrorCode::TypeError, "loop variable " + d.var + " must be an integer scalar",
                  first);
    if (!accept_op("=")) fail("'='");
    d.lower = expr();
    expect_punct(",");
    d.upper = expr();
    if (accept_punct(","))
      throw Error(ErrorCode::UnsupportedConstruct, "DO loop stride", first);
    expect_eos();
    for (auto* b : {&d.lower, &d.upper})
      if ((*b)->type != ValueType::Integer)
        throw Error(ErrorCode::TypeError, "DO bounds must be integer expressions", first);
    ++idx_;
    d.body = block({"enddo"}, sub);
    begin_line();
    if (accept_kw("enddo")) {
    } else {
      expect_kw("end");
      expect_kw("do");
    }
    expect_eos();
    const int last = lines_[idx_].last_line;
    ++idx_;
    return Stmt{std::move(d), first, last};
  }

  Stmt if_block(const Subroutine& sub) {
    const int first = lines_[idx_].first_line;
    expect_kw("if");
    ExprPtr cond = parenthesized_condition();
    if (!accept_kw("then")) {
      // Logical IF: a single simple statement on the same line.
      Stmt inner = simple_statement();
      ++idx_;
      IfBlock b{std::move(cond), {}, {}};
      b.then_body.push_back(std::move(inner));
      return Stmt{std::move(b), first, lines_[idx_ - 1].last_line};
    }
    expect_eos();
    ++idx_;
    IfBlock b{std::move(cond), block({"else", "endif"}, sub), {}};
    begin_line();
    if (accept_kw("else")) {
      if (more() && toks()[pos_].is(TokenKind::Keyword, "if")) {
        // ELSE IF chains become a nested block in the else branch; the nested
        // block consumes the shared ENDIF.
        Stmt nested = if_block(sub);
        nested.first_line = lines_[idx_ - 1].first_line;
        b.else_body.push_back(std::move(nested));
        return Stmt{std::move(b), first, lines_[idx_ - 1].last_line};
      }
      expect_eos();
      ++idx_;
      b.else_body = block({"endif"}, sub);
      begin_line();
    }
    if (accept_kw("endif")) {
    } else {
      expect_kw("end");
      expect_kw("if");
    }
    expect_eos();
    const int last = lines_[idx_].last_line;
    ++idx_;
    return Stmt{std::move(b), first, last};
  }

  ExprPtr parenthesized_condition() {
    expect_punct("(");
    ExprPtr c = expr();
    expect_punct(")");
    if (c->type != ValueType::Logical)
      throw Error(ErrorCode::TypeError, "IF condition must be logical", line_no_);
    return c;
  }

  // ---- expressions ---------------------------------------------------------
  ExprPtr expr() { return eqv_expr(); }

  // A bare array name is passed whole; anything else is an ordinary expression.
  ExprPtr call_argument() {
    const Token* t = peek();
    const Token* next = peek(1);
    if (t && t->kind == TokenKind::Identifier &&
        (!next || next->is(TokenKind::Punctuation, ",") || next->is(TokenKind::Punctuation, ")"))) {
      const Symbol* sym = syms_.find(t->text);
      if (sym && sym->kind == SymbolKind::Array) {
        ++pos_;
        return make_expr(ScalarRef{t->text}, sym->value_type(), t->line);
      }
    }
    return expr();
  }

  ExprPtr logical_binary(BinaryOp op, ExprPtr l, ExprPtr r, int line) {
    if (l->type != ValueType::Logical || r->type != ValueType::Logical)
      throw Error(ErrorCode::TypeError, std::string("operands of ") + spelling(op) +
                                            " must be logical", line);
    return make_expr(Binary{op, std::move(l), std::move(r)}, ValueType::Logical, line);
  }

  ExprPtr eqv_expr() {
    ExprPtr l = or_expr();
    while (true) {
      int ln = cur_line();
      if (accept_op(".eqv.")) l = logical_binary(BinaryOp::Eqv, l, or_expr(), ln);
      else if (accept_op(".neqv.")) l = logical_binary(BinaryOp::Neqv, l, or_expr(), ln);
      else return l;
    }
  }

  ExprPtr or_expr() {
    ExprPtr l = and_expr();
    while (true) {
      int ln = cur_line();
      if (accept_op(".or.")) l = logical_binary(BinaryOp::Or, l, and_expr(), ln);
      else return l;
    }
  }

  ExprPtr and_expr() {
    ExprPtr l = not_expr();
    while (true) {
      int ln = cur_line();
      if (accept_op(".and.")) l = logical_binary(BinaryOp::And, l, not_expr(), ln);
      else return l;
    }
  }

  ExprPtr not_expr() {
    int ln = cur_line();
    if (accept_op(".not.")) {
      ExprPtr o = not_expr();
      if (o->type != ValueType::Logical)
        throw Error(ErrorCode::TypeError, ".not. needs a logical operand", ln);
      return make_expr(Unary{UnaryOp::Not, std::move(o)}, ValueType::Logical, ln);
    }
    return rel_expr();
  }

  ExprPtr rel_expr() {
    ExprPtr l = add_expr();
    static const std::pair<const char*, BinaryOp> rels[] = {
        {"==", BinaryOp::Eq},  {".eq.", BinaryOp::Eq}, {"/=", BinaryOp::Ne}, {".ne.", BinaryOp::Ne},
        {"<=", BinaryOp::Le},  {".le.", BinaryOp::Le}, {"<", BinaryOp::Lt},  {".lt.", BinaryOp::Lt},
        {">=", BinaryOp::Ge},  {".ge.", BinaryOp::Ge}, {">", BinaryOp::Gt},  {".gt.", BinaryOp::Gt},
    };
    int ln = cur_line();
    for (auto& [s, op] : rels) {
      if (accept_op(s)) {
        ExprPtr r = add_expr();
        if (l->type == ValueType::Logical || r->type == ValueType::Logical)
          throw Error(ErrorCode::TypeError, "relational operands must be numeric", ln);
        return make_expr(Binary{op, std::move(l), std::move(r)}, ValueType::Logical, ln);
      }
    }
    return l;
  }

  ExprPtr numeric_binary(BinaryOp op, ExprPtr l, ExprPtr r, int line) {
    if (l->type == ValueType::Logical || r->type == ValueType::Logical)
      throw Error(ErrorCode::TypeError, std::string("operands of ") + spelling(op) +
                                            " must be numeric", line);
    ValueType t = promote(l->type, r->type);
    return make_expr(Binary{op, std::move(l), std::move(r)}, t, line);
  }

  ExprPtr numeric_unary(UnaryOp op, ExprPtr o, int line) {
    if (o->type == ValueType::Logical)
      throw Error(ErrorCode::TypeError, "unary sign on logical operand", line);
    ValueType t = o->type;
    return make_expr(Unary{op, std::move(o)}, t, line);
  }

  ExprPtr add_expr() {
    int ln = cur_line();
    ExprPtr l;
    if (accept_op("-")) l = numeric_unary(UnaryOp::Neg, mul_expr(), ln);
    else if (accept_op("+")) l = numeric_unary(UnaryOp::Plus, mul_expr(), ln);
    else l = mul_expr();
    while (true) {
      ln = cur_line();
      if (accept_op("+")) l = numeric_binary(BinaryOp::Add, l, mul_expr(), ln);
      else if (accept_op("-")) l = numeric_binary(BinaryOp::Sub, l, mul_expr(), ln);
      else return l;
    }
  }

  // Operand of * / allowing a nonstandard leading sign (a*-b).
  ExprPtr signed_pow() {
    int ln = cur_line();
    if (accept_op("-")) return numeric_unary(UnaryOp::Neg, pow_expr(), ln);
    if (accept_op("+")) return numeric_unary(UnaryOp::Plus, pow_expr(), ln);
    return pow_expr();
  }

  ExprPtr mul_expr() {
    ExprPtr l = signed_pow();
    while (true) {
      int ln = cur_line();
      if (accept_op("*")) l = numeric_binary(BinaryOp::Mul, l, signed_pow(), ln);
      else if (accept_op("/")) l = numeric_binary(BinaryOp::Div, l, signed_pow(), ln);
      else return l;
    }
  }

  ExprPtr pow_expr() {
    ExprPtr base = primary();
    int ln = cur_line();
    if (accept_op("**")) {
      ExprPtr ex = signed_pow(); // right associative
      return numeric_binary(BinaryOp::Pow, std::move(base), std::move(ex), ln);
    }
    return base;
  }

  ExprPtr primary() {
    if (!more()) fail("expression");
    const Token& t = toks()[pos_];
    int ln = t.line;
    switch (t.kind) {
    case TokenKind::IntegerLiteral:
      ++pos_;
      return make_expr(IntLit{parse_int_text(t)}, ValueType::Integer, ln);
    case TokenKind::RealLiteral:
      ++pos_;
      return make_expr(RealLit{parse_real_text(t)}, ValueType::Real, ln);
    case TokenKind::Keyword:
      if (t.lower() == ".true." || t.lower() == ".false.") {
        ++pos_;
        return make_expr(LogicalLit{t.lower() == ".true."}, ValueType::Logical, ln);
      }
      fail("expression");
    case TokenKind::Identifier:
      return designator();
    case TokenKind::Punctuation:
      if (t.text == "(") {
        ++pos_;
        ExprPtr e = eqv_expr();
        expect_punct(")");
        return e;
      }
      fail("expression");
    default:
      fail("expression");
    }
  }

  ExprPtr designator() {
    const Token& t = toks()[pos_];
    const int ln = t.line;
    std::string name = t.text;
    ++pos_;
    const Symbol* sym = syms_.find(name);
    if (more() && toks()[pos_].is(TokenKind::Punctuation, "(")) {
      ++pos_;
      std::vector<ExprPtr> args;
      if (!accept_punct(")")) {
        do {
          args.push_back(eqv_expr());
        } while (accept_punct(","));
        expect_punct(")");
      }
      if (sym) {
        if (sym->kind != SymbolKind::Array)
          throw Error(ErrorCode::TypeError, "scalar " + sym->name + " used with subscripts", ln);
        if (static_cast<int>(args.size()) != sym->rank())
          throw Error(ErrorCode::TypeError,
                      sym->name + " has rank " + std::to_string(sym->rank()) + " but " +
                          std::to_string(args.size()) + " subscripts were given",
                      ln);
        for (auto& a : args)
          if (a->type != ValueType::Integer)
            throw Error(ErrorCode::TypeError, "subscripts of " + sym->name + " must be integer",
                        ln);
        return make_expr(ArrayRef{name, std::move(args)}, sym->value_type(), ln);
      }
      std::string low = lower(name);
      if (is_intrinsic(low)) return intrinsic(low, std::move(args), ln);
      throw Error(ErrorCode::UndeclaredSymbol, name, ln);
    }
    if (!sym) throw Error(ErrorCode::UndeclaredSymbol, name, ln);
    if (sym->kind == SymbolKind::Array)
      throw Error(ErrorCode::TypeError, "array " + sym->name + " used without subscripts", ln);
    return make_expr(ScalarRef{name}, sym->value_type(), ln);
  }

  ExprPtr intrinsic(const std::string& name, std::vector<ExprPtr> args, int ln) {
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi)
        throw Error(ErrorCode::TypeError, "wrong number of arguments to " + name, ln);
    };
    for (auto& a : args)
      if (a->type == ValueType::Logical)
        throw Error(ErrorCode::TypeError, "logical argument to " + name, ln);
    ValueType t = ValueType::Integer;
    if (name == "mod") {
      arity(2, 2);
      t = promote(args[0]->type, args[1]->type);
    } else if (name == "abs") {
      arity(1, 1);
      t = args[0]->type;
    } else if (name == "min" || name == "max") {
      arity(2, 16);
      t = args[0]->type;
      for (auto& a : args) t = promote(t, a->type);
    } else if (name == "sqrt" || name == "exp" || name == "log" || name == "dble") {
      arity(1, 1);
      t = ValueType::Real;
    } else if (name == "int") {
      arity(1, 1);
      t = ValueType::Integer;
    }
    return make_expr(IntrinsicCall{name, std::move(args)}, t, ln);
  }

  std::vector<LogicalLine> lines_;
  std::size_t idx_ = 0;
  std::size_t pos_ = 0;
  int line_no_ = 0;
  SymbolTable syms_;
};

std::optional<ConstValue> fold_constant(const Expr& e, const SymbolTable& syms) {
  if (auto* i = e.as<IntLit>()) return i->value;
  if (auto* r = e.as<RealLit>()) return r->value;
  if (auto* s = e.as<ScalarRef>()) {
    const Symbol* sym = syms.find(s->name);
    if (sym && sym->constant) return sym->constant;
    return std::nullopt;
  }
  if (auto* u = e.as<Unary>()) {
    auto v = fold_constant(*u->operand, syms);
    if (!v || u->op == UnaryOp::Not) return std::nullopt;
    if (u->op == UnaryOp::Plus) return v;
    return std::visit([](auto x) -> ConstValue { return -x; }, *v);
  }
  if (auto* b = e.as<Binary>()) {
    auto l = fold_constant(*b->lhs, syms);
    auto r = fold_constant(*b->rhs, syms);
    if (!l || !r) return std::nullopt;
    if (std::holds_alternative<std::int64_t>(*l) && std::holds_alternative<std::int64_t>(*r)) {
      auto x = std::get<std::int64_t>(*l), y = std::get<std::int64_t>(*r);
      switch (b->op) {
      case BinaryOp::Add: return x + y;
      case BinaryOp::Sub: return x - y;
      case BinaryOp::Mul: return x * y;
      case BinaryOp::Div:
        if (y == 0) return std::nullopt;
        return x / y;
      default: return std::nullopt;
      }
    }
    auto as_d = [](const ConstValue& v) {
      return std::visit([](auto x) { return static_cast<double>(x); }, v);
    };
    double x = as_d(*l), y = as_d(*r);
    switch (b->op) {
    case BinaryOp::Add: return x + y;
    case BinaryOp::Sub: return x - y;
    case BinaryOp::Mul: return x * y;
    case BinaryOp::Div: return x / y;
    default: return std::nullopt;
    }
  }
  return std::nullopt;
}

} // namespace

ParsedUnit parse_unit(std::span<const Token> tokens) {
  Parser p(split_lines(tokens));
  ParsedUnit u = p.unit();
  if (!p.at_end())
    throw Error(ErrorCode::ParseError, "expected end of input after END SUBROUTINE",
                u.sub.last_line + 1);
  return u;
}

std::vector<ParsedUnit> parse_program(std::span<const Token> tokens) {
  Parser p(split_lines(tokens));
  std::vector<ParsedUnit> out;
  while (!p.at_end()) out.push_back(p.unit());
  return out;
}

} // namespace loopport::frontend
