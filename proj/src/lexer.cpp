// SPDX-License-Identifier: Apache-2.0
#include "loopport/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "loopport/error.hpp"

namespace loopport::frontend {

namespace {

constexpr std::array kKeywords = {
    "subroutine", "end",       "do",       "enddo",      "if",       "then",     "else",
    "endif",      "call",      "return",   "integer",    "real",     "dimension", "intent",
    "parameter",  "implicit",  "none",     "allocate",   "deallocate", "goto",   "stop",
    "print",      "write",     "read",     "exit",       "cycle",    "while",    "select",
    "case",       "module",    "use",      "contains",   "function", "program",  "logical",
    "character",  "type",      "pointer",  "allocatable", "common",  "equivalence", "data",
    "format",     "entry",     "save",     "open",       "close",    "nullify",
};

constexpr std::array kDotOperators = {".and.", ".or.", ".not.", ".eq.",  ".ne.",  ".lt.",
                                      ".le.",  ".gt.", ".ge.",  ".eqv.", ".neqv."};
constexpr std::array kDotLiterals = {".true.", ".false."};

std::string lowered(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    std::string pending_ws;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\v') {
        pending_ws += c;
        advance(1);
        continue;
      }
      const int line = line_;
      const int col = col_;
      std::size_t start = pos_;
      TokenKind kind;
      if (c == '\n' || (c == '\r' && peek(1) == '\n')) {
        kind = TokenKind::EndOfLine;
        std::size_t len = c == '\n' ? 1 : 2;
        std::string text(src_.substr(pos_, len));
        pos_ += len;
        out.push_back(Token{kind, std::move(text), line, col, std::move(pending_ws)});
        pending_ws.clear();
        ++line_;
        col_ = 1;
        continue;
      }
      if (c == '!') {
        kind = TokenKind::Comment;
        while (pos_ < src_.size() && src_[pos_] != '\n' &&
               !(src_[pos_] == '\r' && peek(1) == '\n'))
          advance(1);
      } else if (is_ident_start(c)) {
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance(1);
        kind = is_keyword(lowered(src_.substr(start, pos_ - start))) ? TokenKind::Keyword
                                                                      : TokenKind::Identifier;
      } else if (is_digit(c) || (c == '.' && is_digit(peek(1)))) {
        kind = number();
      } else if (c == '.') {
        kind = dot_word(line, col);
      } else {
        kind = symbol(line, col);
      }
      out.push_back(Token{kind, std::string(src_.substr(start, pos_ - start)), line, col,
                          std::move(pending_ws)});
      pending_ws.clear();
    }
    if (!pending_ws.empty())
      out.push_back(Token{TokenKind::EndOfLine, "", line_, col_, std::move(pending_ws)});
    return out;
  }

private:
  char peek(std::size_t off) const {
    return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
  }
  void advance(std::size_t n) {
    pos_ += n;
    col_ += static_cast<int>(n);
  }

  // Length of a dot-delimited operator or logical literal starting at pos_+off.
  std::size_t dot_word_length(std::size_t off) const {
    auto rest = src_.substr(pos_ + off);
    for (auto* w : kDotOperators)
      if (rest.size() >= std::string_view(w).size() &&
          lowered(rest.substr(0, std::string_view(w).size())) == w)
        return std::string_view(w).size();
    for (auto* w : kDotLiterals)
      if (rest.size() >= std::string_view(w).size() &&
          lowered(rest.substr(0, std::string_view(w).size())) == w)
        return std::string_view(w).size();
    return 0;
  }

  TokenKind number() {
    bool real = false;
    while (is_digit(peek(0))) advance(1);
    if (peek(0) == '.' && dot_word_length(0) == 0) {
      real = true;
      advance(1);
      while (is_digit(peek(0))) advance(1);
    }
    char e = peek(0);
    if (e == 'e' || e == 'E' || e == 'd' || e == 'D') {
      std::size_t off = 1;
      if (peek(1) == '+' || peek(1) == '-') off = 2;
      if (is_digit(peek(off))) {
        real = true;
        advance(off);
        while (is_digit(peek(0))) advance(1);
      }
    }
    if (peek(0) == '_' && is_ident_char(peek(1))) {
      advance(1);
      while (is_ident_char(peek(0))) advance(1);
    }
    return real ? TokenKind::RealLiteral : TokenKind::IntegerLiteral;
  }

  TokenKind dot_word(int line, int col) {
    std::size_t len = dot_word_length(0);
    if (len == 0) throw Error(ErrorCode::LexError, "unrecognized '.' sequence", line, col);
    bool literal = lowered(src_.substr(pos_, len)) == ".true." ||
                   lowered(src_.substr(pos_, len)) == ".false.";
    advance(len);
    return literal ? TokenKind::Keyword : TokenKind::Operator;
  }

  TokenKind symbol(int line, int col) {
    static constexpr std::array<std::string_view, 7> two = {"**", "==", "/=", "<=",
                                                            ">=", "::", "=>"};
    std::string_view rest = src_.substr(pos_);
    for (auto op : two) {
      if (rest.substr(0, 2) == op) {
        advance(2);
        return op == "::" ? TokenKind::Punctuation : TokenKind::Operator;
      }
    }
    char c = src_[pos_];
    switch (c) {
    case '+': case '-': case '*': case '/': case '=': case '<': case '>':
      advance(1);
      return TokenKind::Operator;
    case '(': case ')': case ',': case ':': case '&':
      advance(1);
      return TokenKind::Punctuation;
    default:
      break;
    }
    std::string shown = std::isprint(static_cast<unsigned char>(c))
                            ? std::string(1, c)
                            : "\\x" + std::to_string(static_cast<unsigned char>(c));
    throw Error(ErrorCode::LexError, "unrecognized character '" + shown + "'", line, col);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

} // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
  case TokenKind::Keyword: return "KW";
  case TokenKind::Identifier: return "IDENT";
  case TokenKind::IntegerLiteral: return "INT";
  case TokenKind::RealLiteral: return "REAL";
  case TokenKind::Operator: return "OP";
  case TokenKind::Punctuation: return "PUNCT";
  case TokenKind::Comment: return "COMMENT";
  case TokenKind::EndOfLine: return "EOL";
  }
  return "?";
}

std::string Token::lower() const { return lowered(text); }

bool Token::is(TokenKind k, std::string_view low) const {
  return kind == k && lowered(text) == low;
}

bool is_keyword(std::string_view low) {
  return std::find(kKeywords.begin(), kKeywords.end(), low) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    out += t.leading;
    out += t.text;
  }
  return out;
}

} // namespace loopport::frontend
