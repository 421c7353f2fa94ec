// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "loopport/ast.hpp"

namespace loopport::regions {

enum class RegionKind { Host, Parallel };
enum class Relation { Ge, Le, Eq };

struct Assumption {
  std::string variable; // as written
  Relation relation = Relation::Ge;
  std::int64_t bound = 0;

  bool operator==(const Assumption&) const = default;
};

struct TaggedRegion {
  RegionKind kind = RegionKind::Host;
  frontend::StmtList statements;
  std::vector<Assumption> options;
  int first_line = 0;
  int last_line = 0;
};

/// Splits a subroutine body at `!#LOOPY_START` / `!#LOOPY_END` comments.
/// Tag comments belong to no region. Throws UnmatchedTag, NestedTag,
/// MisplacedTag (tag inside a compound statement) or BadTagOption.
std::vector<TaggedRegion> extract_regions(const frontend::Subroutine& sub);

/// Parses the suffix of a START tag: empty, or `(assume="v>=k", ...)`.
/// A suffix without parentheses is accepted too.
std::vector<Assumption> parse_tag_options(std::string_view raw);

/// Inverse of parse_tag_options; empty list prints as "".
std::string print_tag_options(const std::vector<Assumption>& options);
std::string to_string(const Assumption& a); // "nxc>=3"

enum class TagKind { None, Start, End };
/// Classifies a comment line. For Start, `suffix` receives the text after the
/// keyword.
TagKind classify_tag(std::string_view comment, std::string* suffix = nullptr);

/// Source text with every tag comment line removed.
std::string strip_tags(std::string_view source);

} // namespace loopport::regions
