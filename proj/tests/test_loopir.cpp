// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "loopport/error.hpp"
#include "loopport/loopir.hpp"
#include "loopport/parser.hpp"
#include "loopport/regions.hpp"
#include "support.hpp"

using namespace loopport;
using namespace loopport::ir;
using frontend::parse_source;
using frontend::ParsedUnit;
using regions::TaggedRegion;

namespace {

struct Loaded {
  ParsedUnit unit;
  TaggedRegion region;
};

Loaded first_parallel(const std::string& src, std::size_t unit = 0) {
  auto units = parse_source(src);
  auto& u = units.at(unit);
  for (auto& r : regions::extract_regions(u.sub))
    if (r.kind == regions::RegionKind::Parallel) return {std::move(u), r};
  throw std::runtime_error("no parallel region");
}

Loaded load(const std::filesystem::path& p) { return first_parallel(testsupport::read_file(p)); }

LoopKernel lowered(const std::filesystem::path& p) {
  auto l = load(p);
  return map_grid(lower_region(l.region, l.unit.symbols, l.unit.sub.name));
}

std::string kernel_src(const std::string& decls, const std::string& region,
                       const std::string& tag = "!#LOOPY_START") {
  return "SUBROUTINE k(a, b, n, m)\n  INTEGER, INTENT(IN) :: n, m\n"
         "  REAL(kind=8), DIMENSION(n,m), INTENT(INOUT) :: a\n"
         "  REAL(kind=8), DIMENSION(n,m), INTENT(IN) :: b\n  INTEGER :: i, j, k, t\n"
         "  REAL(kind=8) :: s\n" +
         decls + tag + "\n" + region + "!#LOOPY_END\nEND SUBROUTINE k\n";
}

ErrorCode lower_error(const std::string& src) {
  auto l = first_parallel(src);
  try {
    lower_region(l.region, l.unit.symbols);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "lowered:\n" << src;
  return ErrorCode::BadConfig;
}

std::vector<std::string> codes(const std::vector<Diagnostic>& ds) {
  std::vector<std::string> out;
  for (const auto& d : ds) out.push_back(d.code);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    out.push_back(text.substr(pos, nl - pos));
    pos = nl == std::string::npos ? text.size() : nl + 1;
  }
  return out;
}

} // namespace

TEST(Lowering, RestrictionKernel) {
  LoopKernel k = lowered(testsupport::fixture("restrict_listing.f90"));
  ASSERT_EQ(k.domains.size(), 2u);
  EXPECT_EQ(k.domains[0].var, "jc");
  EXPECT_EQ(compact(*k.domains[0].lower), "2");
  EXPECT_EQ(compact(*k.domains[0].upper), "Nyc-1");
  EXPECT_EQ(k.domains[1].var, "ic");
  EXPECT_EQ(compact(*k.domains[1].upper), "Nxc-1");
  std::vector<std::string> privs;
  for (const auto& p : k.privates) privs.push_back(p.name);
  std::sort(privs.begin(), privs.end());
  EXPECT_EQ(privs, (std::vector<std::string>{"i", "j"}));
  EXPECT_EQ(k.stored_arrays(), (std::vector<std::string>{"qc"}));
  EXPECT_EQ(k.loaded_arrays(), (std::vector<std::string>{"ci", "q"}));
  ASSERT_EQ(k.body.size(), 3u);
  int stores = 0;
  for (const auto& in : k.body) stores += in.as<StoreArray>() != nullptr;
  EXPECT_EQ(stores, 1);
  // params in declaration order; PARAMETERs become constants
  std::vector<std::string> params;
  for (const auto& p : k.params) params.push_back(p.name);
  EXPECT_EQ(params, (std::vector<std::string>{"Nxc", "Nyc", "QC", "Q", "Ci"}));
  ASSERT_NE(k.param("qc"), nullptr);
  EXPECT_EQ(k.param("qc")->rank(), 2);
  EXPECT_EQ(k.constants.size(), 10u);
}

TEST(Lowering, CopyLoop) {
  LoopKernel k = lowered(testsupport::fixture("copy.f90"));
  ASSERT_EQ(k.domains.size(), 1u);
  EXPECT_EQ(k.grid_axes, 1);
  EXPECT_EQ(k.loaded_arrays(), (std::vector<std::string>{"b"}));
  EXPECT_EQ(k.stored_arrays(), (std::vector<std::string>{"a"}));
  EXPECT_TRUE(k.privates.empty());
}

TEST(Lowering, AccumulatedIndicesAreRejected) {
  auto l = load(testsupport::fixture("carried_index.f90"));
  try {
    lower_region(l.region, l.unit.symbols);
    FAIL();
  } catch (const LoweringError& e) {
    ASSERT_FALSE(e.diagnostics().empty());
    EXPECT_EQ(e.diagnostics()[0].code, "LOOP_CARRIED_SCALAR");
    EXPECT_EQ(e.diagnostics()[0].line, 11); // I = I + 2
  }
}

TEST(Dependencies, AccumulatorsWithClosedFormHints) {
  auto l = load(testsupport::fixture("carried_index.f90"));
  auto ds = detect_loop_carried_deps(l.region, l.unit.symbols);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].code, "LOOP_CARRIED_SCALAR");
  EXPECT_EQ(ds[0].severity, Severity::Error);
  EXPECT_NE(ds[0].message.find("scalar I "), std::string::npos);
  EXPECT_EQ(ds[0].hint, "I = (IC-1) * 2");
  EXPECT_EQ(ds[1].code, "LOOP_CARRIED_SCALAR");
  EXPECT_NE(ds[1].message.find("scalar J "), std::string::npos);
  EXPECT_EQ(ds[1].hint, "J = (JC-1) * 2");
  EXPECT_EQ(ds[1].line, 13);
}

TEST(Dependencies, ClosedFormRewriteIsClean) {
  auto l = load(testsupport::fixture("hoisted_index.f90"));
  EXPECT_TRUE(detect_loop_carried_deps(l.region, l.unit.symbols).empty());
  EXPECT_NO_THROW(lower_region(l.region, l.unit.symbols));
}

TEST(Dependencies, AllIterationsStoreOneElement) {
  auto l = load(testsupport::fixture("overlap.f90"));
  auto ds = detect_loop_carried_deps(l.region, l.unit.symbols);
  ASSERT_EQ(codes(ds), (std::vector<std::string>{"WRITE_OVERLAP"}));
  EXPECT_NE(ds[0].message.find("A(1)"), std::string::npos);
  EXPECT_EQ(lower_error(testsupport::read_file(testsupport::fixture("overlap.f90"))),
            ErrorCode::LoweringFailed);
}

TEST(Dependencies, NeighbourReadOfStoredArray) {
  auto l = load(testsupport::fixture("lexgs.f90"));
  auto ds = detect_loop_carried_deps(l.region, l.unit.symbols);
  auto c = codes(ds);
  EXPECT_EQ(std::count(c.begin(), c.end(), "READ_WRITE_OVERLAP"), 2);
}

TEST(Dependencies, IndirectStoreIsOnlyAWarning) {
  auto l = load(testsupport::fixture("race.f90"));
  auto ds = detect_loop_carried_deps(l.region, l.unit.symbols);
  ASSERT_EQ(codes(ds), (std::vector<std::string>{"DYNAMIC_INDEX"}));
  EXPECT_EQ(ds[0].severity, Severity::Warning);
  LoopKernel k = lower_region(l.region, l.unit.symbols);
  EXPECT_EQ(k.warnings.size(), 1u);
}

TEST(Dependencies, MoreCases) {
  // scalar defined in one branch only, read after the branch
  auto src = kernel_src("", "DO i = 1, n\n  IF (i > 2) THEN\n    t = i\n  ENDIF\n  a(i,1) = t\nENDDO\n");
  auto l = first_parallel(src);
  EXPECT_EQ(codes(detect_loop_carried_deps(l.region, l.unit.symbols)),
            (std::vector<std::string>{"LOOP_CARRIED_SCALAR"}));
  // defined in both branches: private
  src = kernel_src("", "DO i = 1, n\n  IF (i > 2) THEN\n    s = 1.0d0\n  ELSE\n    s = 2.0d0\n"
                       "  ENDIF\n  a(i,1) = s\nENDDO\n");
  l = first_parallel(src);
  EXPECT_TRUE(detect_loop_carried_deps(l.region, l.unit.symbols).empty());
  // inner sequential accumulation over a thread loop is still carried
  src = kernel_src("", "DO j = 1, m\n  DO i = 1, n\n    s = 0.0d0\n    DO k = 1, n\n"
                       "      s = s + b(k,j)\n    ENDDO\n  ENDDO\nENDDO\n");
  l = first_parallel(src);
  EXPECT_EQ(codes(detect_loop_carried_deps(l.region, l.unit.symbols)),
            (std::vector<std::string>{"LOOP_CARRIED_SCALAR"}));
  // stores on disjoint parities do not overlap
  src = kernel_src("", "DO j = 1, m/2\n  DO i = 1, n/2\n    a(2*i,2*j) = 1.0d0\n"
                       "    a(2*i-1,2*j) = b(2*i,2*j)\n  ENDDO\nENDDO\n");
  l = first_parallel(src);
  EXPECT_TRUE(detect_loop_carried_deps(l.region, l.unit.symbols).empty());
  // a(i+1,j) vs a(i,j): different iterations hit the same element
  src = kernel_src("", "DO j = 1, m\n  DO i = 1, n-1\n    a(i,j) = 1.0d0\n    a(i+1,j) = 2.0d0\n"
                       "  ENDDO\nENDDO\n");
  l = first_parallel(src);
  EXPECT_EQ(codes(detect_loop_carried_deps(l.region, l.unit.symbols)),
            (std::vector<std::string>{"WRITE_OVERLAP"}));
  // 2D nest storing through only the inner index
  src = kernel_src("", "DO j = 1, m\n  DO i = 1, n\n    a(i,1) = b(i,j)\n  ENDDO\nENDDO\n");
  l = first_parallel(src);
  EXPECT_EQ(codes(detect_loop_carried_deps(l.region, l.unit.symbols)),
            (std::vector<std::string>{"WRITE_OVERLAP"}));
  // assigning a dummy scalar inside the kernel
  src = "SUBROUTINE k(a, n, t)\n  INTEGER, INTENT(IN) :: n\n  INTEGER, INTENT(INOUT) :: t\n"
        "  REAL(kind=8), DIMENSION(n), INTENT(INOUT) :: a\n  INTEGER :: i\n!#LOOPY_START\n"
        "DO i = 1, n\n  t = i\n  a(i) = t\nENDDO\n!#LOOPY_END\nEND SUBROUTINE k\n";
  l = first_parallel(src);
  EXPECT_EQ(codes(detect_loop_carried_deps(l.region, l.unit.symbols)),
            (std::vector<std::string>{"SHARED_SCALAR_WRITE"}));
}

TEST(Dependencies, HintForms) {
  auto hint = [](const std::string& region) {
    auto l = first_parallel(kernel_src("", region));
    auto ds = detect_loop_carried_deps(l.region, l.unit.symbols);
    return ds.empty() ? std::string("none") : ds[0].hint.value_or("no hint");
  };
  EXPECT_EQ(hint("t = 0\nDO i = 1, n\n  t = t + 1\n  a(t,1) = 0\nENDDO\n"), "t = i");
  EXPECT_EQ(hint("t = 3\nDO i = 1, n\n  t = t + 3\n  a(t,1) = 0\nENDDO\n"), "t = (i+1) * 3");
  EXPECT_EQ(hint("t = 5\nDO i = 1, n\n  t = t + 3\n  a(t,1) = 0\nENDDO\n"), "t = i * 3 + 5");
  EXPECT_EQ(hint("t = 10\nDO i = 2, n\n  t = t - 1\n  a(t,1) = 0\nENDDO\n"), "t = (i-11) * (-1)");
  EXPECT_EQ(hint("t = 1\nDO i = 1, n\n  t = t + 2\n  a(t,1) = 0\nENDDO\n"), "t = i * 2 + 1");
  EXPECT_EQ(hint("DO i = 1, n\n  t = t + 2\n  a(t,1) = 0\nENDDO\n"),
            "compute t from the loop indices instead of updating it");
}

TEST(Lowering, StructuralErrors) {
  EXPECT_EQ(lower_error(kernel_src("", "  i = 1\n")), ErrorCode::NonLoopRegion);
  EXPECT_EQ(lower_error(kernel_src("", "")), ErrorCode::NonLoopRegion);
  EXPECT_EQ(lower_error(kernel_src("", "DO j = 1, m\n  DO i = 1, n\n    a(i,j) = 0\n  ENDDO\n"
                                       "  a(1,j) = 1\nENDDO\n")),
            ErrorCode::ImperfectNest);
  EXPECT_EQ(lower_error(kernel_src("", "DO i = 1, n\n  a(i,1) = 0\nENDDO\nDO i = 1, n\n"
                                       "  a(i,2) = 0\nENDDO\n")),
            ErrorCode::ImperfectNest);
  EXPECT_EQ(lower_error(kernel_src("", "DO i = 1, n\n  CALL foo(a)\nENDDO\n")),
            ErrorCode::UnsupportedConstruct);
  EXPECT_EQ(lower_error(kernel_src("", "DO i = 1, n\n  a(i,1) = 0\nENDDO\n",
                                   "!#LOOPY_START(assume=\"s>=1\")")),
            ErrorCode::BadTagOption);
  EXPECT_EQ(lower_error(kernel_src("", "DO j = 1, m\n  DO i = 1, j\n    a(i,j) = 0\n  ENDDO\nENDDO\n")),
            ErrorCode::LoweringFailed);
}

TEST(Lowering, ThreeDeepNestKeepsInnerLoopPerThread) {
  auto l = first_parallel(kernel_src("", "DO j = 1, m\n  DO i = 1, n\n    s = 0.0d0\n"
                                         "    t = 2\n    DO k = 1, 3\n      a(i,j) = b(i,j) * k + t\n"
                                         "    ENDDO\n  ENDDO\nENDDO\n"));
  LoopKernel k = map_grid(lower_region(l.region, l.unit.symbols, "deep"));
  EXPECT_EQ(k.domains.size(), 3u);
  EXPECT_EQ(k.grid_axes, 2);
  auto prog = thread_program(k);
  ASSERT_EQ(prog.size(), 3u);
  ASSERT_NE(prog[2].as<SeqLoop>(), nullptr);
  std::string dump = emit_kernel_text(k);
  EXPECT_NE(dump.find("domain k: 1 .. 3 [thread loop]"), std::string::npos) << dump;
  EXPECT_NE(dump.find("  loop k: 1 .. 3\n"), std::string::npos) << dump;
}

TEST(GridMapping, ExtentWarnings) {
  auto corpus = lowered(testsupport::corpus("restrict.f90"));
  EXPECT_EQ(corpus.grid_axes, 2);
  EXPECT_TRUE(corpus.warnings.empty());
  auto listing = lowered(testsupport::fixture("restrict_listing.f90"));
  ASSERT_EQ(listing.warnings.size(), 1u);
  EXPECT_EQ(listing.warnings[0].code, "DYNAMIC_BOUNDS");
  EXPECT_NE(listing.warnings[0].message.find("domain jc "), std::string::npos);
  auto copy = lowered(testsupport::fixture("copy.f90"));
  EXPECT_EQ(codes(copy.warnings), (std::vector<std::string>{"DYNAMIC_BOUNDS"}));
  // idempotent
  EXPECT_EQ(map_grid(copy).warnings.size(), 1u);
}

TEST(StaticBounds, Examples) {
  EXPECT_EQ(check_bounds_static(lowered(testsupport::corpus("restrict.f90"))), BoundsStatus::Verified);
  LoopKernel bare = lowered(testsupport::corpus("restrict.f90"));
  bare.assumptions.clear();
  EXPECT_EQ(check_bounds_static(bare), BoundsStatus::Unknown);
  LoopKernel shift = lowered(testsupport::fixture("shift_store.f90"));
  EXPECT_EQ(check_bounds_static(shift), BoundsStatus::Unknown);
  LoopKernel copy = lowered(testsupport::fixture("copy.f90"));
  EXPECT_EQ(check_bounds_static(copy), BoundsStatus::Unknown);
  copy.assumptions = {{"n", regions::Relation::Ge, 1}};
  EXPECT_EQ(check_bounds_static(copy), BoundsStatus::Verified);
  // listing only knows nxc >= 3
  EXPECT_EQ(check_bounds_static(lowered(testsupport::fixture("restrict_listing.f90"))),
            BoundsStatus::Unknown);
}

TEST(StaticBounds, CorpusKernels) {
  EXPECT_EQ(check_bounds_static(lowered(testsupport::corpus("residual.f90"))), BoundsStatus::Verified);
  EXPECT_EQ(check_bounds_static(lowered(testsupport::corpus("interp.f90"))), BoundsStatus::Verified);
  EXPECT_EQ(check_bounds_static(lowered(testsupport::corpus("zero.f90"))), BoundsStatus::Verified);
  // strided colour loops have non-affine extents
  EXPECT_EQ(check_bounds_static(lowered(testsupport::corpus("relax.f90"))), BoundsStatus::Unknown);
}

TEST(CorpusKernels, AllLowerWithoutDiagnostics) {
  int kernels = 0;
  for (const auto& p : testsupport::corpus_files()) {
    for (const auto& u : parse_source(testsupport::read_file(p))) {
      for (const auto& r : regions::extract_regions(u.sub)) {
        if (r.kind != regions::RegionKind::Parallel) continue;
        auto ds = detect_loop_carried_deps(r, u.symbols);
        EXPECT_TRUE(ds.empty()) << p << ": " << (ds.empty() ? "" : format(ds[0]));
        LoopKernel k = map_grid(lower_region(r, u.symbols, u.sub.name));
        EXPECT_TRUE(k.warnings.empty()) << p;
        ++kernels;
      }
    }
  }
  EXPECT_EQ(kernels, 5);
}

TEST(KernelText, RestrictionDump) {
  std::string dump = emit_kernel_text(lowered(testsupport::corpus("restrict.f90")));
  auto lines = lines_of(dump);
  EXPECT_NE(std::find(lines.begin(), lines.end(), "domain jc: 2 .. Nyc-1 [grid axis 0]"), lines.end());
  EXPECT_NE(std::find(lines.begin(), lines.end(), "domain ic: 2 .. Nxc-1 [grid axis 1]"), lines.end());
  int stores = 0;
  for (const auto& l : lines) stores += l.find("store QC(ic,jc)") != std::string::npos;
  EXPECT_EQ(stores, 1);
  std::string golden = testsupport::read_file(testsupport::fixture("golden/restrict.kernel"));
  EXPECT_EQ(dump, golden);
}

TEST(KernelText, Deterministic) {
  auto a = lowered(testsupport::corpus("interp.f90"));
  auto b = lowered(testsupport::corpus("interp.f90"));
  EXPECT_EQ(emit_kernel_text(a), emit_kernel_text(b));
  // re-parsing the pretty-printed source gives the same kernel text
  auto u = testsupport::parse_one(testsupport::corpus("interp.f90"));
  auto reprinted = first_parallel(frontend::pretty_print(u.sub));
  auto c = map_grid(lower_region(reprinted.region, reprinted.unit.symbols, reprinted.unit.sub.name));
  EXPECT_EQ(emit_kernel_text(a), emit_kernel_text(c));
}

TEST(KernelText, EmptyBodyIsHeaderOnly) {
  auto l = first_parallel(kernel_src("", "DO i = 1, n\nENDDO\n"));
  std::string dump = emit_kernel_text(map_grid(lower_region(l.region, l.unit.symbols, "empty")));
  EXPECT_EQ(dump.find("body"), std::string::npos);
  EXPECT_EQ(dump.substr(0, 13), "kernel empty\n");
  EXPECT_EQ(dump.substr(dump.size() - 11), "end kernel\n");
}
