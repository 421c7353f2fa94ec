// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "loopport/ast.hpp"
#include "loopport/lexer.hpp"
#include "loopport/symbols.hpp"

namespace loopport::frontend {

struct ParsedUnit {
  Subroutine sub;
  SymbolTable symbols;
};

/// Parses exactly one SUBROUTINE ... END SUBROUTINE unit. Comment-only lines
/// before the header or after the END are dropped.
ParsedUnit parse_unit(std::span<const Token> tokens);

/// Parses zero or more units from one file.
std::vector<ParsedUnit> parse_program(std::span<const Token> tokens);

inline std::vector<ParsedUnit> parse_source(std::string_view source) {
  auto toks = tokenize(source);
  return parse_program(toks);
}

} // namespace loopport::frontend
