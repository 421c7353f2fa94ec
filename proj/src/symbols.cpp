// SPDX-License-Identifier: Apache-2.0
#include "loopport/symbols.hpp"

#include <algorithm>
#include <array>

#include "loopport/error.hpp"

namespace loopport::frontend {

void SymbolTable::add(Symbol sym) {
  std::string key = lower(sym.name);
  if (table_.count(key))
    throw Error(ErrorCode::ParseError, "redeclaration of " + sym.name, sym.line);
  table_.emplace(std::move(key), std::move(sym));
}

const Symbol* SymbolTable::find(std::string_view name) const {
  auto it = table_.find(lower(name));
  return it == table_.end() ? nullptr : &it->second;
}

const Symbol& SymbolTable::at(std::string_view name, int line) const {
  if (const Symbol* s = find(name)) return *s;
  throw Error(ErrorCode::UndeclaredSymbol, std::string(name), line);
}

std::vector<const Symbol*> SymbolTable::ordered() const {
  std::vector<const Symbol*> out;
  out.reserve(table_.size());
  for (const auto& [k, v] : table_) out.push_back(&v);
  std::sort(out.begin(), out.end(),
            [](const Symbol* a, const Symbol* b) { return a->order < b->order; });
  return out;
}

std::optional<std::int64_t> SymbolTable::int_constant(std::string_view name) const {
  const Symbol* s = find(name);
  if (!s || !s->constant || !std::holds_alternative<std::int64_t>(*s->constant))
    return std::nullopt;
  return std::get<std::int64_t>(*s->constant);
}

bool is_intrinsic(std::string_view n) {
  static constexpr std::array<std::string_view, 9> names = {
      "mod", "abs", "sqrt", "min", "max", "dble", "int", "exp", "log"};
  return std::find(names.begin(), names.end(), n) != names.end();
}

} // namespace loopport::frontend
