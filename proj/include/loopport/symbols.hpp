// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "loopport/ast.hpp"

namespace loopport::frontend {

enum class SymbolKind { Scalar, Array };

using ConstValue = std::variant<std::int64_t, double>;

struct Symbol {
  std::string name; // declared spelling
  SymbolKind kind = SymbolKind::Scalar;
  BaseType type = BaseType::Integer;
  std::vector<DimSpec> bounds; // empty for scalars
  Intent intent = Intent::None;
  int dummy_position = -1;     // index in the parameter list, -1 for locals
  std::optional<ConstValue> constant;
  int order = 0;               // declaration order
  int line = 0;

  int rank() const { return static_cast<int>(bounds.size()); }
  bool is_dummy() const { return dummy_position >= 0; }
  ValueType value_type() const {
    return type == BaseType::Integer ? ValueType::Integer : ValueType::Real;
  }
};

/// Case-insensitive symbol table with implicit typing disabled.
class SymbolTable {
public:
  /// Throws ParseError on redeclaration.
  void add(Symbol sym);

  const Symbol* find(std::string_view name) const;
  /// Throws UndeclaredSymbol.
  const Symbol& at(std::string_view name, int line = 0) const;

  /// Symbols in declaration order.
  std::vector<const Symbol*> ordered() const;
  std::size_t size() const { return table_.size(); }

  std::optional<std::int64_t> int_constant(std::string_view name) const;

private:
  std::map<std::string, Symbol> table_;
};

bool is_intrinsic(std::string_view lowered_name);

} // namespace loopport::frontend
