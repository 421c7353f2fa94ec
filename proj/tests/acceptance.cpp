// SPDX-License-Identifier: Apache-2.0
// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any fails.
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "loopport/hostexec.hpp"
#include "loopport/mgcorpus.hpp"
#include "mg_oracle.hpp"
#include "support.hpp"

using namespace loopport;
using frontend::lower;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

const host::ExternalRegistry& builtins() {
  static const host::ExternalRegistry r = [] {
    host::ExternalRegistry x;
    host::register_builtin_externals(x);
    return x;
  }();
  return r;
}

const host::Program& corpus() {
  static const host::Program p = mg::load_corpus();
  return p;
}

// random inputs for a corpus subroutine with one kernel

struct ArrayVal {
  vdev::Shape shape;
  vdev::ElemType type;
  vdev::Payload data;
};

struct Inputs {
  std::vector<std::string> order; // dummies by position, lowercased
  std::map<std::string, std::int64_t> ints;
  std::map<std::string, double> reals;
  std::map<std::string, ArrayVal> arrays;
};

Inputs random_inputs(const host::TranslatedSubroutine& sub, const ir::LoopKernel& k, std::mt19937_64& rng) {
  std::vector<const frontend::Symbol*> dummies;
  for (const auto* s : sub.unit.symbols.ordered())
    if (s->is_dummy()) dummies.push_back(s);
  std::sort(dummies.begin(), dummies.end(), [](auto* a, auto* b) { return a->dummy_position < b->dummy_position; });
  Inputs in;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto* s : dummies) {
    std::string key = lower(s->name);
    in.order.push_back(key);
    if (s->kind == frontend::SymbolKind::Array) continue;
    if (s->type != frontend::BaseType::Integer) {
      in.reals[key] = u(rng);
      continue;
    }
    std::int64_t lo = 1, hi = -1;
    for (const auto& a : k.assumptions) {
      if (lower(a.variable) != key) continue;
      if (a.relation == regions::Relation::Ge) lo = std::max(lo == 1 ? a.bound : lo, a.bound);
      if (a.relation == regions::Relation::Le) hi = a.bound;
      if (a.relation == regions::Relation::Eq) lo = hi = a.bound;
    }
    if (hi < lo) hi = lo + 6;
    in.ints[key] = lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  auto lookup = [&](const std::string& n) -> std::optional<std::int64_t> {
    if (auto it = in.ints.find(n); it != in.ints.end()) return it->second;
    return sub.unit.symbols.int_constant(n);
  };
  for (const auto* s : dummies) {
    if (s->kind != frontend::SymbolKind::Array) continue;
    ArrayVal a;
    for (const auto& b : s->bounds) {
      auto lo = b.lower ? ir::eval_int(*b.lower, lookup) : std::optional<std::int64_t>(1);
      auto hi = ir::eval_int(*b.upper, lookup);
      require(lo && hi, "bounds of " + s->name);
      a.shape.dims.push_back({*lo, *hi});
    }
    a.type = host::Interpreter::elem_type(s->type);
    std::size_t n = a.shape.element_count();
    if (a.type == vdev::ElemType::Int32) {
      std::vector<std::int32_t> v(n);
      for (auto& x : v) x = static_cast<std::int32_t>(rng() % 7);
      a.data = v;
    } else {
      std::vector<double> v(n);
      for (auto& x : v) x = u(rng);
      a.data = v;
    }
    in.arrays[lower(s->name)] = std::move(a);
  }
  return in;
}

std::map<std::string, vdev::BufferId> materialize(vdev::Device& d, const Inputs& in) {
  std::map<std::string, vdev::BufferId> ids;
  for (const auto& [name, a] : in.arrays) {
    ids[name] = d.create(a.shape, a.type, vdev::Initial::Host);
    d.upload(ids[name], a.data);
  }
  return ids;
}

bool same_bits(const vdev::Payload& a, const vdev::Payload& b) {
  return std::visit(
      [&](const auto& x) {
        const auto& y = std::get<std::decay_t<decltype(x)>>(b);
        return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(x[0])) == 0;
      },
      a);
}

std::vector<std::pair<std::string, const host::TranslatedSubroutine*>> kernel_subs() {
  std::vector<std::pair<std::string, const host::TranslatedSubroutine*>> out;
  for (const auto& n : corpus().names()) {
    const auto* s = corpus().find(n);
    bool has = std::any_of(s->kernels.begin(), s->kernels.end(), [](const auto& k) { return k != nullptr; });
    if (has) out.emplace_back(n, s);
  }
  return out;
}

std::shared_ptr<const ir::LoopKernel> only_kernel(const host::TranslatedSubroutine& s) {
  for (const auto& k : s.kernels)
    if (k) return k;
  throw Failed("no kernel");
}

// criteria

std::string c1_round_trip() {
  auto files = testsupport::corpus_files();
  for (const auto& p : testsupport::fixture_files()) files.push_back(p);
  for (const auto& p : files) {
    std::string src = testsupport::read_file(p);
    auto first = frontend::parse_source(src);
    std::string printed;
    for (const auto& u : first) printed += frontend::pretty_print(u.sub);
    auto second = frontend::parse_source(printed);
    require(first.size() == second.size(), p.filename().string() + ": unit count");
    for (std::size_t k = 0; k < first.size(); ++k)
      require(frontend::equal(first[k].sub, second[k].sub), p.filename().string() + ": AST differs after printing");
    auto plain = frontend::parse_source(regions::strip_tags(src));
    require(plain.size() == first.size(), p.filename().string() + ": tag-stripped unit count");
    // tags are comments; compare with comments removed
    std::function<frontend::StmtList(const frontend::StmtList&)> code = [&](const frontend::StmtList& in) {
      frontend::StmtList out;
      for (const auto& st : in) {
        if (st.as<frontend::CommentLine>()) continue;
        frontend::Stmt c = st;
        if (auto* d = c.as<frontend::DoLoop>()) d->body = code(d->body);
        if (auto* i = c.as<frontend::IfBlock>()) {
          i->then_body = code(i->then_body);
          i->else_body = code(i->else_body);
        }
        out.push_back(std::move(c));
      }
      return out;
    };
    for (std::size_t k = 0; k < first.size(); ++k)
      require(frontend::equal(code(first[k].sub.body), code(plain[k].sub.body)),
              p.filename().string() + ": tag-stripped source parses differently");
  }
  return std::to_string(files.size()) + " files";
}

std::string c2_diagnostics() {
  auto load = [](const char* f) {
    auto u = testsupport::parse_one(testsupport::fixture(f));
    for (auto& r : regions::extract_regions(u.sub))
      if (r.kind == regions::RegionKind::Parallel) return std::make_pair(std::move(u), r);
    throw Failed(std::string("no region in ") + f);
  };
  auto [lu, lr] = load("carried_index.f90");
  std::vector<std::string> got;
  try {
    ir::lower_region(lr, lu.symbols);
    throw Failed("left listing lowered");
  } catch (const ir::LoweringError& e) {
    for (const auto& d : e.diagnostics()) got.push_back(ir::format(d));
  }
  const std::vector<std::string> want = {
      "error LOOP_CARRIED_SCALAR at line 11: scalar I is read before it is assigned in the iteration and is "
      "updated in the loop body, so its value is carried from the previous iteration\n  hint: I = (IC-1) * 2",
      "error LOOP_CARRIED_SCALAR at line 13: scalar J is read before it is assigned in the iteration and is "
      "updated in the loop body, so its value is carried from the previous iteration\n  hint: J = (JC-1) * 2"};
  require(got == want, "diagnostics differ from golden:\n" + (got.empty() ? std::string() : got[0]));
  auto [ru, rr] = load("hoisted_index.f90");
  require(ir::detect_loop_carried_deps(rr, ru.symbols).empty(), "right listing has diagnostics");
  ir::LoopKernel k = ir::lower_region(rr, ru.symbols);
  require(k.warnings.empty(), "right listing has warnings");
  return "2 diagnostics exact";
}

std::string c3_sequential_equivalence() {
  std::mt19937_64 rng(3);
  int total = 0;
  for (const auto& [name, sub] : kernel_subs()) {
    const auto& k = *only_kernel(*sub);
    for (int trial = 0; trial < 100; ++trial) {
      Inputs in = random_inputs(*sub, k, rng);
      std::map<std::string, vdev::Payload> out[2];
      for (int m = 0; m < 2; ++m) {
        vdev::Device d;
        host::Interpreter it(corpus(), builtins(), d, m == 0 ? host::ExecMode::Device : host::ExecMode::Sequential);
        auto ids = materialize(d, in);
        std::vector<host::Arg> args;
        for (const auto& n : in.order) {
          if (ids.count(n)) args.emplace_back(ids[n]);
          else if (in.ints.count(n)) args.emplace_back(host::Cell::integer(in.ints.at(n)));
          else args.emplace_back(host::Cell::real(in.reals.at(n)));
        }
        it.call(name, args);
        require((d.ledger_snapshot().launches > 0) == (m == 0), name + ": launch accounting");
        for (const auto& [an, id] : ids) out[m][an] = d.download(id);
      }
      for (const auto& [an, p] : out[0]) require(same_bits(p, out[1][an]), name + ": " + an + " differs, trial " + std::to_string(trial));
      ++total;
    }
  }
  return std::to_string(total) + " runs over " + std::to_string(kernel_subs().size()) + " kernels";
}

std::string c4_schedule_independence() {
  std::mt19937_64 rng(4);
  for (const auto& [name, sub] : kernel_subs()) {
    auto k = only_kernel(*sub);
    for (int trial = 0; trial < 3; ++trial) {
      Inputs in = random_inputs(*sub, *k, rng);
      std::map<std::string, vdev::Payload> ref;
      for (std::uint64_t s = 0; s <= 5; ++s) {
        vdev::Device d;
        auto ids = materialize(d, in);
        vdev::LaunchPlan plan{k, {}, s == 0 ? vdev::Schedule::natural() : vdev::Schedule::shuffled(1000 * trial + s)};
        for (const auto& p : k->params) {
          std::string key = lower(p.name);
          if (ids.count(key)) plan.args[key] = ids[key];
          else if (in.ints.count(key)) plan.args[key] = in.ints[key];
          else plan.args[key] = in.reals[key];
        }
        d.launch(plan);
        for (const auto& [an, id] : ids) {
          auto p = d.download(id);
          if (s == 0) ref[an] = p;
          else require(same_bits(p, ref[an]), name + ": schedule " + std::to_string(s) + " changes " + an);
        }
      }
    }
  }
  // the deliberate race must be caught
  auto race = testsupport::kernel_of(testsupport::fixture("race.f90"), "scatter");
  const std::int64_t n = 64;
  vdev::Device d;
  auto a = d.create(vdev::shape_of({2}), vdev::ElemType::Real64, vdev::Initial::ZeroedBoth);
  auto b = d.create(vdev::shape_of({n}), vdev::ElemType::Real64, vdev::Initial::Host);
  auto idx = d.create(vdev::shape_of({n}), vdev::ElemType::Int32, vdev::Initial::Host);
  std::vector<double> bv(n);
  std::vector<std::int32_t> iv(n);
  for (std::int64_t i = 0; i < n; ++i) {
    bv[static_cast<std::size_t>(i)] = static_cast<double>(i);
    iv[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(1 + i % 2);
  }
  d.upload(b, bv);
  d.upload(idx, iv);
  auto run = [&](vdev::Schedule s) {
    d.launch({race, {{"a", a}, {"b", b}, {"idx", idx}, {"n", n}, {"m", std::int64_t{2}}}, s});
    return d.download(a);
  };
  auto natural = run(vdev::Schedule::natural());
  bool caught = false;
  for (std::uint64_t s = 1; s <= 5 && !caught; ++s) caught = !same_bits(run(vdev::Schedule::shuffled(s)), natural);
  require(caught, "race fixture not caught by 5 shuffles");
  return std::to_string(kernel_subs().size()) + " kernels x 5 schedules, race caught";
}

std::string c5_residency() {
  using vdev::Direction;
  using vdev::Mode;
  using vdev::Side;
  std::mt19937_64 rng(5);
  for (int seq = 0; seq < 10000; ++seq) {
    vdev::Device d;
    auto init = static_cast<vdev::Initial>(rng() % 3);
    auto id = d.create(vdev::shape_of({3, 2}), vdev::ElemType::Real64, init);
    // two real copies with versions; a side is current iff it holds the newest version
    std::int64_t ver[2] = {init != vdev::Initial::Device ? 0 : -1, init != vdev::Initial::Host ? 0 : -1};
    std::int64_t newest = 0;
    int steps = 1 + static_cast<int>(rng() % 20);
    for (int s = 0; s < steps; ++s) {
      Side side = rng() % 2 ? Side::Host : Side::Device;
      Mode mode = static_cast<Mode>(rng() % 3);
      auto got = d.access(id, side, mode);
      std::vector<vdev::TransferEvent> want;
      int me = side == Side::Host ? 0 : 1;
      if (ver[me] != newest) {
        want.push_back({side == Side::Host ? Direction::D2H : Direction::H2D, id, 48});
        ver[me] = newest;
      }
      if (mode != Mode::Read) ver[me] = ++newest;
      require(got == want, "sequence " + std::to_string(seq) + " step " + std::to_string(s));
    }
  }
  vdev::Device d;
  auto id = d.create(vdev::shape_of({16}), vdev::ElemType::Real64, vdev::Initial::Host);
  d.access(id, vdev::Side::Host, vdev::Mode::Write);
  d.access(id, vdev::Side::Device, vdev::Mode::Read);
  d.access(id, vdev::Side::Device, vdev::Mode::Read);
  auto l = d.ledger_snapshot();
  require(l.h2d_count == 1 && l.d2h_count == 0 && l.h2d_bytes == 128, "write-then-run sequence");
  return "10000 sequences, write-then-run sequence 1 H2D";
}

std::string c6_restriction() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 2; ++trial) {
    const std::int64_t Nc = 6 + trial, Nf = 2 * Nc - 1;
    std::vector<double> q(static_cast<std::size_t>(Nf * Nf), 1.0), ci(static_cast<std::size_t>(Nc * Nc * 8), 0.5);
    if (trial == 1) {
      for (auto& x : q) x = u(rng);
      for (auto& x : ci) x = u(rng);
    }
    vdev::Device d;
    host::Interpreter in(corpus(), builtins(), d);
    auto qc = d.create(vdev::shape_of({Nc, Nc}), vdev::ElemType::Real64, vdev::Initial::ZeroedBoth);
    auto qb = d.create(vdev::shape_of({Nf, Nf}), vdev::ElemType::Real64, vdev::Initial::Host);
    auto cb = d.create(vdev::shape_of({Nc, Nc, 8}), vdev::ElemType::Real64, vdev::Initial::Host);
    d.upload(qb, q);
    d.upload(cb, ci);
    in.call("restrict", {qc, qb, cb, host::Cell::integer(Nc), host::Cell::integer(Nc)});
    auto out = std::get<std::vector<double>>(d.download(qc));
    auto Q = [&](std::int64_t i, std::int64_t j) { return q[static_cast<std::size_t>((j - 1) * Nf + i - 1)]; };
    auto C = [&](std::int64_t i, std::int64_t j, int l) {
      return ci[static_cast<std::size_t>(((l - 1) * Nc + (j - 1)) * Nc + i - 1)];
    };
    for (std::int64_t jc = 2; jc < Nc; ++jc)
      for (std::int64_t ic = 2; ic < Nc; ++ic) {
        double got = out[static_cast<std::size_t>((jc - 1) * Nc + ic - 1)];
        if (trial == 0) {
          require(got == 5.0, "QC(" + std::to_string(ic) + "," + std::to_string(jc) + ") is not exactly 5");
          continue;
        }
        std::int64_t i = 2 * ic - 1, j = 2 * jc - 1;
        double want = C(ic, jc, 1) * Q(i - 1, j - 1) + C(ic, jc, 2) * Q(i, j - 1) + C(ic + 1, jc, 3) * Q(i + 1, j - 1) +
                      C(ic, jc, 4) * Q(i - 1, j) + Q(i, j) + C(ic + 1, jc, 5) * Q(i + 1, j) +
                      C(ic, jc + 1, 6) * Q(i - 1, j + 1) + C(ic, jc + 1, 7) * Q(i, j + 1) +
                      C(ic + 1, jc + 1, 8) * Q(i + 1, j + 1);
        require(std::fabs(got - want) <= 1e-13, "nine-term sum mismatch");
      }
  }
  return "uniform case exact, random case within 1e-13";
}

std::string c7_galerkin() {
  mg::Problem p = mg::build_problem(mg::poisson(7));
  mg::StencilOperator ac = mg::galerkin(p.op, mg::bilinear_interp(3, 3));
  Eigen::MatrixXd P(oracle::bilinear_P(7));
  Eigen::MatrixXd rap = P.transpose() * Eigen::MatrixXd(oracle::poisson_matrix(7)) * P;
  double worst = 0.0;
  for (int J = 0; J < 3; ++J)
    for (int I = 0; I < 3; ++I)
      for (int k = 0; k < 9; ++k) {
        int I2 = I + mg::dir_di(k), J2 = J + mg::dir_dj(k);
        double want = I2 >= 0 && J2 >= 0 && I2 < 3 && J2 < 3 ? rap(oracle::id(I, J, 3), oracle::id(I2, J2, 3)) : 0.0;
        worst = std::max(worst, std::fabs(ac.at(I + 2, J + 2, k) - want));
      }
  require(worst <= 1e-12, "stencil vs dense differs by " + std::to_string(worst));
  double sym = 0.0;
  vdev::Device d;
  host::Interpreter in(corpus(), builtins(), d);
  for (const auto& spec : {mg::poisson(7), mg::poisson(63), mg::piecewise(63)})
  {
    mg::Multigrid h(in, mg::build_problem(spec).op);
    for (const auto& l : h.levels()) sym = std::max(sym, mg::symmetry_defect(l.op));
  }
  require(sym <= 1e-12, "symmetry defect " + std::to_string(sym));
  std::ostringstream s;
  s << "max |stencil - RAP| = " << worst << ", symmetry defect " << sym;
  return s.str();
}

std::string c8_convergence() {
  std::ostringstream s;
  for (int n : {63, 127}) {
    mg::Problem p = mg::build_problem(mg::poisson(n));
    vdev::Device d;
    host::Interpreter in(corpus(), builtins(), d);
    mg::Multigrid m(in, p.op);
    auto r = m.solve(p.rhs, 1e-8, 30);
    require(r.history.size() <= 12, "n=" + std::to_string(n) + " took " + std::to_string(r.history.size()) + " cycles");
    for (std::size_t k = 1; k < r.history.size(); ++k) require(r.history[k] < r.history[k - 1], "history not decreasing");
    oracle::RefMultigrid ref(oracle::poisson_matrix(n), n);
    oracle::Vec b(n * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) b[oracle::id(i, j, n)] = p.rhs[static_cast<std::size_t>((j + 1) * (n + 2) + i + 1)];
    int want = ref.cycles_to(b, 1e-8, 30);
    require(want > 0 && std::abs(want - static_cast<int>(r.history.size())) <= 1, "oracle needs " + std::to_string(want));
    s << (n == 63 ? "" : ", ") << "n=" << n << ": " << r.history.size() << " cycles (oracle " << want << ")";
  }
  return s.str();
}

std::string c9_fidelity() {
  const int n = 63;
  mg::Problem p = mg::build_problem(mg::poisson(n));
  std::vector<double> x[2];
  std::size_t cycles = 0, levels = 0;
  vdev::TransferLedger led;
  for (int m = 0; m < 2; ++m) {
    vdev::Device d;
    host::Interpreter in(corpus(), builtins(), d, m == 0 ? host::ExecMode::Device : host::ExecMode::Sequential);
    mg::Multigrid mgd(in, p.op);
    auto r = mgd.solve(p.rhs, 1e-8, 30);
    x[m] = r.x;
    if (m == 0) {
      cycles = r.history.size();
      levels = mgd.levels().size();
      led = d.ledger_snapshot();
    } else {
      require(d.ledger_snapshot().launches == 0, "sequential run launched kernels");
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < x[0].size(); ++k) worst = std::max(worst, std::fabs(x[0][k] - x[1][k]));
  require(worst <= 1e-12, "device and interpreter differ by " + std::to_string(worst));
  std::uint64_t want = cycles * (levels - 1) * mg::Multigrid::launches_per_level({}) + (cycles + 1);
  require(led.launches == want, "launches " + std::to_string(led.launches) + " != " + std::to_string(want));
  std::ostringstream s;
  s << "max diff " << worst << ", " << led.launches << " launches = " << cycles << "*" << (levels - 1) << "*"
    << mg::Multigrid::launches_per_level({}) << " + " << (cycles + 1) << " monitor";
  return s.str();
}

std::string c10_report() {
  mg::Problem p = mg::build_problem(mg::poisson(1023));
  vdev::Device d;
  host::Interpreter in(corpus(), builtins(), d);
  mg::Multigrid m(in, p.op);
  auto r = m.solve(p.rhs, 1e-8, 20);
  mg::Report rep = mg::make_report(d.ledger_snapshot());
  require(rep.levels.size() == m.levels().size(), "one row per level");
  std::ostringstream s;
  s << r.history.size() << " cycles; thread ratios";
  for (std::size_t l = 0; l + 2 < rep.levels.size(); ++l) {
    double ratio = static_cast<double>(rep.levels[l].threads) / static_cast<double>(rep.levels[l + 1].threads);
    require(ratio > 3.4 && ratio < 4.6, rep.levels[l].label + " thread ratio " + std::to_string(ratio));
    s << " " << std::fixed << std::setprecision(2) << ratio;
  }
  for (std::size_t l = 0; l + 1 < rep.levels.size(); ++l)
    require(rep.levels[l].launches == rep.levels[0].launches, rep.levels[l].label + " launch count differs");
  require(rep.levels.back().launches == 0 && rep.levels.back().external_calls == r.history.size(), "coarsest row");
  s << "; " << rep.levels[0].launches << " launches on every non-coarsest level";
  return s.str();
}

} // namespace

int main() {
  struct Criterion {
    const char* title;
    double limit; // seconds, 0 for none
    std::function<std::string()> run;
  };
  const std::vector<Criterion> all = {
      {"parser round-trip", 1.0, c1_round_trip},
      {"dependency diagnostics", 0.0, c2_diagnostics},
      {"sequential-equivalence oracle", 30.0, c3_sequential_equivalence},
      {"schedule independence", 30.0, c4_schedule_independence},
      {"buffer residency automaton", 10.0, c5_residency},
      {"restriction oracle", 0.0, c6_restriction},
      {"Galerkin correctness", 0.0, c7_galerkin},
      {"multigrid convergence", 10.0, c8_convergence},
      {"end-to-end translation fidelity", 0.0, c9_fidelity},
      {"report shape", 60.0, c10_report},
  };
  int failed = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& c = all[k];
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok && c.limit > 0 && secs > c.limit) {
      ok = false;
      detail += " (over the " + std::to_string(static_cast<int>(c.limit)) + " s budget)";
    }
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << (k + 1) << ". " << c.title << " [" << std::fixed
              << std::setprecision(2) << secs << " s]: " << detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
