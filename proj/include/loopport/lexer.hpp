// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loopport::frontend {

enum class TokenKind {
  Keyword,
  Identifier,
  IntegerLiteral,
  RealLiteral,
  Operator,
  Punctuation,
  Comment,
  EndOfLine,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;    // verbatim source slice
  int line = 0;        // 1-based
  int column = 0;      // 1-based
  std::string leading; // whitespace between the previous token and this one

  /// Lowercased text, used for case-insensitive keyword and name matching.
  std::string lower() const;
  bool is(TokenKind k, std::string_view lowered) const;
};

/// Splits free-form source into tokens. Whitespace is recorded in
/// `Token::leading`; trailing whitespace without a final newline is carried
/// by an empty EndOfLine token so that `detokenize` is lossless.
std::vector<Token> tokenize(std::string_view source);

std::string detokenize(std::span<const Token> tokens);

bool is_keyword(std::string_view lowered);

} // namespace loopport::frontend
