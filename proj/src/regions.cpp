// SPDX-License-Identifier: Apache-2.0
#include "loopport/regions.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

#include "loopport/error.hpp"

namespace loopport::regions {

using frontend::CommentLine;
using frontend::Stmt;
using frontend::StmtList;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k)
    if (std::tolower(static_cast<unsigned char>(s[k])) != prefix[k]) return false;
  return true;
}

[[noreturn]] void bad_option(std::string_view text, std::string_view why) {
  throw Error(ErrorCode::BadTagOption,
              "malformed tag option '" + std::string(text) + "': " + std::string(why));
}

// Splits on commas that are not inside double quotes.
std::vector<std::string_view> split_items(std::string_view s) {
  std::vector<std::string_view> out;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '"') quoted = !quoted;
    else if (s[k] == ',' && !quoted) {
      out.push_back(s.substr(start, k - start));
      start = k + 1;
    }
  }
  if (quoted) bad_option(s, "unterminated string");
  out.push_back(s.substr(start));
  return out;
}

Assumption parse_assumption(std::string_view value) {
  std::string_view v = trim(value);
  std::size_t k = 0;
  if (k >= v.size() || !(std::isalpha(static_cast<unsigned char>(v[k])))) bad_option(value, "expected a variable name");
  while (k < v.size() && (std::isalnum(static_cast<unsigned char>(v[k])) || v[k] == '_')) ++k;
  Assumption a;
  a.variable = std::string(v.substr(0, k));
  std::string_view rest = trim(v.substr(k));
  if (rest.starts_with(">=")) {
    a.relation = Relation::Ge;
    rest.remove_prefix(2);
  } else if (rest.starts_with("<=")) {
    a.relation = Relation::Le;
    rest.remove_prefix(2);
  } else if (rest.starts_with("==")) {
    a.relation = Relation::Eq;
    rest.remove_prefix(2);
  } else if (rest.starts_with("=")) {
    a.relation = Relation::Eq;
    rest.remove_prefix(1);
  } else {
    bad_option(value, "expected >=, <= or =");
  }
  rest = trim(rest);
  std::string_view digits = rest;
  if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), a.bound);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty())
    bad_option(value, "expected an integer bound");
  return a;
}

void reject_nested_tags(const StmtList& body) {
  for (const Stmt& s : body) {
    auto check = [](const StmtList& inner) {
      for (const Stmt& t : inner) {
        if (auto* c = t.as<CommentLine>(); c && classify_tag(c->text) != TagKind::None)
          throw Error(ErrorCode::MisplacedTag,
                      "region tag inside a compound statement", t.first_line);
      }
      reject_nested_tags(inner);
    };
    if (auto* d = s.as<frontend::DoLoop>()) check(d->body);
    if (auto* i = s.as<frontend::IfBlock>()) {
      check(i->then_body);
      check(i->else_body);
    }
  }
}

} // namespace

TagKind classify_tag(std::string_view comment, std::string* suffix) {
  std::string_view c = trim(comment);
  if (!c.starts_with("!#")) return TagKind::None;
  c.remove_prefix(2);
  if (iequals_prefix(c, "loopy_start")) {
    if (suffix) *suffix = std::string(trim(c.substr(11)));
    return TagKind::Start;
  }
  if (iequals_prefix(c, "loopy_end")) {
    if (!trim(c.substr(9)).empty())
      throw Error(ErrorCode::BadTagOption, "unexpected text after end tag: " + std::string(comment));
    return TagKind::End;
  }
  return TagKind::None;
}

std::vector<Assumption> parse_tag_options(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.empty()) return {};
  if (s.front() == '(') {
    if (s.back() != ')') bad_option(raw, "missing ')'");
    s = trim(s.substr(1, s.size() - 2));
    if (s.empty()) return {};
  }
  std::vector<Assumption> out;
  for (std::string_view item : split_items(s)) {
    item = trim(item);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) bad_option(item, "expected key=\"value\"");
    std::string key = frontend::lower(trim(item.substr(0, eq)));
    if (key != "assume") bad_option(item, "unknown key '" + key + "'");
    std::string_view value = trim(item.substr(eq + 1));
    if (value.size() < 2 || value.front() != '"' || value.back() != '"')
      bad_option(item, "value must be a quoted string");
    out.push_back(parse_assumption(value.substr(1, value.size() - 2)));
  }
  return out;
}

std::string to_string(const Assumption& a) {
  const char* rel = a.relation == Relation::Ge ? ">=" : a.relation == Relation::Le ? "<=" : "=";
  return a.variable + rel + std::to_string(a.bound);
}

std::string print_tag_options(const std::vector<Assumption>& options) {
  if (options.empty()) return "";
  std::string out = "(";
  for (std::size_t k = 0; k < options.size(); ++k) {
    if (k) out += ", ";
    out += "assume=\"" + to_string(options[k]) + "\"";
  }
  return out + ")";
}

std::vector<TaggedRegion> extract_regions(const frontend::Subroutine& sub) {
  reject_nested_tags(sub.body);
  std::vector<TaggedRegion> out;
  TaggedRegion current;
  bool in_parallel = false;
  int start_line = 0;

  auto flush_host = [&] {
    if (current.statements.empty()) return;
    current.kind = RegionKind::Host;
    current.first_line = current.statements.front().first_line;
    current.last_line = current.statements.back().last_line;
    out.push_back(std::move(current));
    current = TaggedRegion{};
  };

  for (const Stmt& s : sub.body) {
    const auto* c = s.as<CommentLine>();
    std::string suffix;
    TagKind tag = c ? classify_tag(c->text, &suffix) : TagKind::None;
    if (tag == TagKind::Start) {
      if (in_parallel)
        throw Error(ErrorCode::NestedTag, "region start inside an open region", s.first_line);
      flush_host();
      in_parallel = true;
      start_line = s.first_line;
      current.options = parse_tag_options(suffix);
    } else if (tag == TagKind::End) {
      if (!in_parallel)
        throw Error(ErrorCode::UnmatchedTag, "region end without a start", s.first_line);
      current.kind = RegionKind::Parallel;
      current.first_line = start_line;
      current.last_line = s.first_line;
      out.push_back(std::move(current));
      current = TaggedRegion{};
      in_parallel = false;
    } else {
      current.statements.push_back(s);
    }
  }
  if (in_parallel)
    throw Error(ErrorCode::UnmatchedTag, "region start without an end", start_line);
  flush_host();
  return out;
}

std::string strip_tags(std::string_view source) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    std::size_t nl = source.find('\n', pos);
    std::string_view line =
        source.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    bool tag = false;
    try {
      tag = classify_tag(line) != TagKind::None;
    } catch (const Error&) {
      tag = true;
    }
    if (!tag) out += line;
    if (nl == std::string_view::npos) break;
    out += '\n';
    pos = nl + 1;
  }
  return out;
}

} // namespace loopport::regions
