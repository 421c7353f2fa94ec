// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopport/ast.hpp"
#include "loopport/loopir.hpp"
#include "loopport/parser.hpp"
#include "loopport/regions.hpp"

namespace testsupport {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path corpus(const std::string& name) {
  return std::filesystem::path(LOOPPORT_CORPUS_DIR) / name;
}
inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(LOOPPORT_FIXTURE_DIR) / name;
}

inline std::vector<std::filesystem::path> corpus_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(LOOPPORT_CORPUS_DIR))
    if (e.path().extension() == ".f90") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::filesystem::path> fixture_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(LOOPPORT_FIXTURE_DIR))
    if (e.path().extension() == ".f90") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline loopport::frontend::ParsedUnit parse_one(const std::filesystem::path& p) {
  auto units = loopport::frontend::parse_source(read_file(p));
  if (units.size() != 1) throw std::runtime_error("expected one unit in " + p.string());
  return std::move(units.front());
}

/// First parallel region of subroutine `sub` in `p`, lowered and grid-mapped.
inline std::shared_ptr<const loopport::ir::LoopKernel> kernel_of(const std::filesystem::path& p,
                                                                 const std::string& sub) {
  for (auto& u : loopport::frontend::parse_source(read_file(p))) {
    if (loopport::frontend::lower(u.sub.name) != loopport::frontend::lower(sub)) continue;
    for (auto& r : loopport::regions::extract_regions(u.sub))
      if (r.kind == loopport::regions::RegionKind::Parallel)
        return std::make_shared<const loopport::ir::LoopKernel>(
            loopport::ir::map_grid(loopport::ir::lower_region(r, u.symbols, u.sub.name)));
  }
  throw std::runtime_error("no parallel region in " + sub);
}

} // namespace testsupport
