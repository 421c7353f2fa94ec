// SPDX-License-Identifier: Apache-2.0
#include "loopport/mgcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

namespace loopport::mg {

using host::Cell;
using vdev::BufferId;
using vdev::ElemType;
using vdev::Initial;

StencilOperator::StencilOperator(std::int64_t nx_, std::int64_t ny_)
    : nx(nx_), ny(ny_), coef(static_cast<std::size_t>((nx_ + 2) * (ny_ + 2) * 9), 0.0) {}

InterpStencil::InterpStencil(std::int64_t Nxc_, std::int64_t Nyc_)
    : Nxc(Nxc_), Nyc(Nyc_), w(static_cast<std::size_t>(Nxc_ * Nyc_ * 8), 0.0) {}

double symmetry_defect(const StencilOperator& a) {
  double worst = 0.0;
  for (std::int64_t j = 1; j <= a.Y(); ++j)
    for (std::int64_t i = 1; i <= a.X(); ++i)
      for (int k = 0; k < 9; ++k) {
        std::int64_t ii = i + dir_di(k), jj = j + dir_dj(k);
        double mine = a.at(i, j, k);
        double theirs = ii >= 1 && ii <= a.X() && jj >= 1 && jj <= a.Y() ? a.at(ii, jj, opposite(k)) : 0.0;
        worst = std::max(worst, std::fabs(mine - theirs));
      }
  return worst;
}

ProblemSpec poisson(std::int64_t n) {
  auto one = [](double, double) { return 1.0; };
  return {n, one, one, one};
}

ProblemSpec piecewise(std::int64_t n) {
  auto d = [](double x, double) { return x < 0.5 ? 1.0 : 10.0; };
  return {n, d, d, [](double, double) { return 1.0; }};
}

Problem build_problem(const ProblemSpec& spec) {
  const std::int64_t n = spec.n;
  if (n < 3) throw Error(ErrorCode::BadProblem, "n must be at least 3, got " + std::to_string(n));
  if (!spec.dx || !spec.dy || !spec.f) throw Error(ErrorCode::BadProblem, "problem needs D and f");
  const double h = 1.0 / static_cast<double>(n + 1);
  const std::int64_t P = n + 2;
  std::vector<double> dxv(static_cast<std::size_t>(P * P)), dyv(dxv.size());
  auto idx = [&](std::int64_t i, std::int64_t j) { return static_cast<std::size_t>((j - 1) * P + (i - 1)); };
  for (std::int64_t j = 1; j <= P; ++j)
    for (std::int64_t i = 1; i <= P; ++i) {
      double x = static_cast<double>(i - 1) * h, y = static_cast<double>(j - 1) * h;
      double a = spec.dx(x, y), b = spec.dy(x, y);
      if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw Error(ErrorCode::BadProblem, "diffusion must be positive, found " + std::to_string(std::min(a, b)) +
                                               " at (" + std::to_string(x) + "," + std::to_string(y) + ")");
      dxv[idx(i, j)] = a;
      dyv[idx(i, j)] = b;
    }
  auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };
  Problem p{StencilOperator(n, n), std::vector<double>(static_cast<std::size_t>(P * P), 0.0)};
  auto interior = [&](std::int64_t i, std::int64_t j) { return i >= 2 && i <= n + 1 && j >= 2 && j <= n + 1; };
  for (std::int64_t j = 2; j <= n + 1; ++j)
    for (std::int64_t i = 2; i <= n + 1; ++i) {
      double w = harm(dxv[idx(i, j)], dxv[idx(i - 1, j)]);
      double e = harm(dxv[idx(i, j)], dxv[idx(i + 1, j)]);
      double s = harm(dyv[idx(i, j)], dyv[idx(i, j - 1)]);
      double nn = harm(dyv[idx(i, j)], dyv[idx(i, j + 1)]);
      p.op.at(i, j, O) = w + e + s + nn;
      if (interior(i - 1, j)) p.op.at(i, j, W) = -w;
      if (interior(i + 1, j)) p.op.at(i, j, E) = -e;
      if (interior(i, j - 1)) p.op.at(i, j, S) = -s;
      if (interior(i, j + 1)) p.op.at(i, j, N) = -nn;
      p.rhs[idx(i, j)] = h * h * spec.f(static_cast<double>(i - 1) * h, static_cast<double>(j - 1) * h);
    }
  return p;
}

std::int64_t coarsen(std::int64_t n) {
  if (n < 3 || n % 2 == 0)
    throw Error(ErrorCode::BadProblem, "extent " + std::to_string(n) + " does not coarsen by 2 (needs odd n >= 3)");
  return (n - 1) / 2;
}

InterpStencil bilinear_interp(std::int64_t ncx, std::int64_t ncy) {
  InterpStencil c(ncx + 2, ncy + 2);
  for (std::int64_t jc = 2; jc <= c.Nyc; ++jc)
    for (std::int64_t ic = 2; ic <= c.Nxc; ++ic) {
      for (int l : {LNE, LNW, LSE, LSW}) c.at(ic, jc, l) = 0.25;
      for (int l : {LA, LR, LL, LB}) c.at(ic, jc, l) = 0.5;
    }
  return c;
}

InterpStencil collapsed_interp(const StencilOperator& a) {
  InterpStencil c(coarsen(a.nx) + 2, coarsen(a.ny) + 2);
  for (std::int64_t jc = 2; jc <= c.Nyc; ++jc)
    for (std::int64_t ic = 2; ic <= c.Nxc; ++ic) {
      std::int64_t i = 2 * ic - 1, j = 2 * jc - 1;
      if (jc < c.Nyc) {
        std::int64_t ei = i - 1;
        double aw = a.at(ei, j, SW) + a.at(ei, j, W) + a.at(ei, j, NW);
        double ao = a.at(ei, j, S) + a.at(ei, j, O) + a.at(ei, j, N);
        double ae = a.at(ei, j, SE) + a.at(ei, j, E) + a.at(ei, j, NE);
        c.at(ic, jc, LL) = -aw / ao;
        c.at(ic, jc, LR) = -ae / ao;
      }
      if (ic < c.Nxc) {
        std::int64_t ej = j - 1;
        double as = a.at(i, ej, SW) + a.at(i, ej, S) + a.at(i, ej, SE);
        double ao = a.at(i, ej, W) + a.at(i, ej, O) + a.at(i, ej, E);
        double an = a.at(i, ej, NW) + a.at(i, ej, N) + a.at(i, ej, NE);
        c.at(ic, jc, LB) = -as / ao;
        c.at(ic, jc, LA) = -an / ao;
      }
    }
  for (std::int64_t jc = 2; jc <= c.Nyc; ++jc)
    for (std::int64_t ic = 2; ic <= c.Nxc; ++ic) {
      std::int64_t fi = 2 * ic - 2, fj = 2 * jc - 2;
      auto s = [&](int k) { return a.at(fi, fj, k); };
      double o = s(O);
      c.at(ic, jc, LNE) = -(s(NE) + s(N) * c.at(ic, jc, LR) + s(E) * c.at(ic, jc, LA)) / o;
      c.at(ic, jc, LNW) = -(s(NW) + s(N) * c.at(ic, jc, LL) + s(W) * c.at(ic - 1, jc, LA)) / o;
      c.at(ic, jc, LSE) = -(s(SE) + s(S) * c.at(ic, jc - 1, LR) + s(E) * c.at(ic, jc, LB)) / o;
      c.at(ic, jc, LSW) = -(s(SW) + s(S) * c.at(ic, jc - 1, LL) + s(W) * c.at(ic - 1, jc, LB)) / o;
    }
  return c;
}

namespace {

struct Contrib {
  std::int64_t ic, jc;
  double w;
};

// Coarse points feeding fine interior point (i,j) under interp_add.
int contributors(const InterpStencil& c, std::int64_t i, std::int64_t j, Contrib out[4]) {
  int n = 0;
  auto add = [&](std::int64_t ic, std::int64_t jc, double w) {
    if (ic >= 2 && ic <= c.Nxc - 1 && jc >= 2 && jc <= c.Nyc - 1) out[n++] = {ic, jc, w};
  };
  bool oi = i % 2 == 1, oj = j % 2 == 1;
  if (oi && oj) {
    add((i + 1) / 2, (j + 1) / 2, 1.0);
  } else if (!oi && oj) {
    std::int64_t ic = (i + 2) / 2, jc = (j + 1) / 2;
    add(ic - 1, jc, c.at(ic, jc, LL));
    add(ic, jc, c.at(ic, jc, LR));
  } else if (oi && !oj) {
    std::int64_t ic = (i + 1) / 2, jc = (j + 2) / 2;
    add(ic, jc - 1, c.at(ic, jc, LB));
    add(ic, jc, c.at(ic, jc, LA));
  } else {
    std::int64_t ic = (i + 2) / 2, jc = (j + 2) / 2;
    add(ic - 1, jc - 1, c.at(ic, jc, LSW));
    add(ic, jc - 1, c.at(ic, jc, LSE));
    add(ic - 1, jc, c.at(ic, jc, LNW));
    add(ic, jc, c.at(ic, jc, LNE));
  }
  return n;
}

} // namespace

StencilOperator galerkin(const StencilOperator& a, const InterpStencil& c) {
  if (c.Nxc != coarsen(a.nx) + 2 || c.Nyc != coarsen(a.ny) + 2)
    throw Error(ErrorCode::BadProblem, "interpolation weights do not match the fine grid");
  StencilOperator ac(c.Nxc - 2, c.Nyc - 2);
  Contrib pf[4], pg[4];
  for (std::int64_t j = 2; j <= a.ny + 1; ++j)
    for (std::int64_t i = 2; i <= a.nx + 1; ++i) {
      int nf = contributors(c, i, j, pf);
      if (nf == 0) continue;
      for (int k = 0; k < 9; ++k) {
        double v = a.at(i, j, k);
        if (v == 0.0) continue;
        std::int64_t gi = i + dir_di(k), gj = j + dir_dj(k);
        if (gi < 2 || gi > a.nx + 1 || gj < 2 || gj > a.ny + 1) continue;
        int ng = contributors(c, gi, gj, pg);
        for (int p = 0; p < nf; ++p)
          for (int q = 0; q < ng; ++q) {
            std::int64_t di = pg[q].ic - pf[p].ic, dj = pg[q].jc - pf[p].jc;
            int dir = static_cast<int>((dj + 1) * 3 + (di + 1));
            ac.at(pf[p].ic, pf[p].jc, dir) += pf[p].w * v * pg[q].w;
          }
      }
    }
  return ac;
}

std::vector<double> dense_padded(const StencilOperator& a) {
  const std::int64_t X = a.X(), Y = a.Y(), N = X * Y;
  std::vector<double> m(static_cast<std::size_t>(N * N), 0.0);
  auto at = [&](std::int64_t p, std::int64_t q) -> double& { return m[static_cast<std::size_t>(p + q * N)]; };
  for (std::int64_t j = 1; j <= Y; ++j)
    for (std::int64_t i = 1; i <= X; ++i) {
      std::int64_t p = (j - 1) * X + (i - 1);
      if (i == 1 || j == 1 || i == X || j == Y) {
        at(p, p) = 1.0;
        continue;
      }
      for (int k = 0; k < 9; ++k) {
        std::int64_t ii = i + dir_di(k), jj = j + dir_dj(k);
        if (ii == 1 || jj == 1 || ii == X || jj == Y) continue;
        at(p, (jj - 1) * X + (ii - 1)) += a.at(i, j, k);
      }
    }
  return m;
}

host::Program load_corpus(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::BadConfig, "corpus directory not found: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".f90") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> sources;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    sources.push_back(ss.str());
  }
  return host::Program::translate(sources);
}

// solver

NotConvergedError::NotConvergedError(std::vector<double> history, int maxiter)
    : Error(ErrorCode::NotConverged,
            "no convergence after " + std::to_string(maxiter) + " cycles, last relative residual " +
                (history.empty() ? std::string("n/a") : std::to_string(history.back()))),
      history_(std::move(history)) {}

namespace {

BufferId upload(vdev::Device& d, std::vector<std::int64_t> ext, const std::vector<double>& v) {
  BufferId id = d.create(vdev::shape_of(std::move(ext)), ElemType::Real64, Initial::Host);
  d.upload(id, v);
  return id;
}

} // namespace

Multigrid::Multigrid(host::Interpreter& interp, const StencilOperator& fine, MgOptions opt)
    : in_(interp), dev_(interp.device()), opt_(opt) {
  if (fine.nx != fine.ny) throw Error(ErrorCode::BadProblem, "grid must be square");
  if (opt.nu1 < 0 || opt.nu2 < 0) throw Error(ErrorCode::BadConfig, "sweep counts must be non-negative");
  if (opt.threshold < 1) throw Error(ErrorCode::BadConfig, "threshold must be at least 1");
  std::string saved = dev_.scope();
  dev_.set_scope("setup");
  std::vector<InterpStencil> weights;
  levels_.push_back({fine.nx, fine, 0, 0, 0, 0, 0});
  weights.emplace_back();
  while (levels_.back().n > opt.threshold) {
    const StencilOperator& a = levels_.back().op;
    InterpStencil c = opt.interp == InterpKind::Bilinear ? bilinear_interp(coarsen(a.nx), coarsen(a.ny))
                                                         : collapsed_interp(a);
    StencilOperator ac = galerkin(a, c);
    levels_.push_back({ac.nx, std::move(ac), 0, 0, 0, 0, 0});
    weights.push_back(std::move(c));
  }
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    Level& lv = levels_[l];
    std::int64_t X = lv.op.X(), Y = lv.op.Y();
    lv.so = upload(dev_, {X, Y, 9}, lv.op.coef);
    lv.x = dev_.create(vdev::shape_of({X, Y}), ElemType::Real64, Initial::ZeroedBoth);
    lv.b = dev_.create(vdev::shape_of({X, Y}), ElemType::Real64, Initial::ZeroedBoth);
    lv.r = dev_.create(vdev::shape_of({X, Y}), ElemType::Real64, Initial::ZeroedBoth);
    if (l > 0) lv.ci = upload(dev_, {X, Y, 8}, weights[l].w);
  }
  const Level& c = levels_.back();
  std::int64_t N = c.op.X() * c.op.Y();
  lfac_ = upload(dev_, {N, N}, dense_padded(c.op));
  in_.call("cholesky_factor", {lfac_, Cell::integer(N)});
  dev_.set_scope(saved);
}

void Multigrid::set_rhs(const std::vector<double>& b) {
  const Level& l = levels_.front();
  if (b.size() != static_cast<std::size_t>(l.op.X() * l.op.Y()))
    throw Error(ErrorCode::BadProblem, "right-hand side has the wrong size");
  dev_.upload(l.b, b);
}

void Multigrid::set_solution(const std::vector<double>& x) {
  const Level& l = levels_.front();
  if (x.size() != static_cast<std::size_t>(l.op.X() * l.op.Y()))
    throw Error(ErrorCode::BadProblem, "initial guess has the wrong size");
  dev_.upload(l.x, x);
}

std::vector<double> Multigrid::solution() { return std::get<std::vector<double>>(dev_.download(levels_.front().x)); }

void Multigrid::sweep(const Level& l, int times) {
  for (int s = 0; s < times; ++s)
    in_.call("relax_sweep", {l.x, l.b, l.so, Cell::integer(l.op.nx), Cell::integer(l.op.ny)});
}

void Multigrid::vcycle(std::size_t level) {
  const Level& f = levels_.at(level);
  dev_.set_scope(scope(level));
  if (level + 1 == levels_.size()) {
    in_.call("coarse_solve", {lfac_, f.b, f.x, Cell::integer(f.op.X()), Cell::integer(f.op.Y())});
    return;
  }
  const Level& c = levels_[level + 1];
  auto nx = Cell::integer(f.op.nx), ny = Cell::integer(f.op.ny);
  auto Xc = Cell::integer(c.op.X()), Yc = Cell::integer(c.op.Y());
  sweep(f, opt_.nu1);
  in_.call("residual", {f.r, f.b, f.x, f.so, nx, ny});
  in_.call("restrict", {c.b, f.r, c.ci, Xc, Yc});
  in_.call("zero_fill", {c.x, Cell::integer(c.op.nx), Cell::integer(c.op.ny)});
  vcycle(level + 1);
  dev_.set_scope(scope(level));
  in_.call("interp_add", {f.x, c.x, c.ci, Xc, Yc});
  sweep(f, opt_.nu2);
}

double Multigrid::norm(BufferId v, std::int64_t count) {
  auto out = Cell::real(0.0);
  in_.call("norm2", {v, Cell::integer(count), out});
  return out->r;
}

double Multigrid::relative_residual() {
  const Level& f = levels_.front();
  auto rn = Cell::real(0.0);
  std::string saved = dev_.scope();
  dev_.set_scope("monitor");
  in_.call("residual_norm", {f.r, f.b, f.x, f.so, Cell::integer(f.op.nx), Cell::integer(f.op.ny), rn});
  dev_.set_scope(saved);
  return rn->r / (bnorm_ > 0.0 ? bnorm_ : 1.0);
}

SolveResult Multigrid::solve(const std::vector<double>& b, double tol, int maxiter, const std::vector<double>* x0) {
  if (!(tol > 0.0)) throw Error(ErrorCode::BadConfig, "tolerance must be positive");
  if (maxiter < 0) throw Error(ErrorCode::BadConfig, "maxiter must be non-negative");
  const Level& f = levels_.front();
  set_rhs(b);
  set_solution(x0 ? *x0 : std::vector<double>(b.size(), 0.0));
  std::string saved = dev_.scope();
  dev_.set_scope("monitor");
  bnorm_ = norm(f.b, f.op.X() * f.op.Y());
  dev_.set_scope(saved);
  SolveResult res;
  if (relative_residual() <= tol) {
    res.x = solution();
    return res;
  }
  for (int it = 0; it < maxiter; ++it) {
    vcycle(0);
    res.history.push_back(relative_residual());
    if (res.history.back() <= tol) {
      dev_.set_scope(saved);
      res.x = solution();
      return res;
    }
  }
  dev_.set_scope(saved);
  throw NotConvergedError(res.history, maxiter);
}

// report

namespace {

void add(ReportRow& into, const ReportRow& r) {
  into.launches += r.launches;
  into.threads += r.threads;
  into.h2d_bytes += r.h2d_bytes;
  into.d2h_bytes += r.d2h_bytes;
  into.external_calls += r.external_calls;
  for (const auto& [k, t] : r.kernels) {
    into.kernels[k].launches += t.launches;
    into.kernels[k].threads += t.threads;
  }
}

ReportRow row_of(const std::string& label, const vdev::ScopeTotals& s) {
  ReportRow r{label, s.launches, s.threads, s.h2d_bytes, s.d2h_bytes, s.external_calls, {}};
  for (const auto& [k, n] : s.kernel_launches) r.kernels[k].launches = n;
  for (const auto& [k, n] : s.kernel_threads) r.kernels[k].threads = n;
  return r;
}

nlohmann::json row_json(const ReportRow& r) {
  nlohmann::json k = nlohmann::json::object();
  for (const auto& [name, t] : r.kernels) k[name] = {{"launches", t.launches}, {"threads", t.threads}};
  return {{"label", r.label},         {"launches", r.launches},   {"threads", r.threads},
          {"h2d_bytes", r.h2d_bytes}, {"d2h_bytes", r.d2h_bytes}, {"external_calls", r.external_calls},
          {"kernels", k}};
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      std::string cell = r[c];
      std::string pad(width[c] - cell.size(), ' ');
      line += c == 0 ? cell + pad : "  " + pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

} // namespace

Report make_report(const vdev::TransferLedger& ledger) {
  Report rep;
  rep.total.label = "Total";
  static const std::regex level_re("level([0-9]+)");
  std::vector<std::pair<long long, ReportRow>> lv;
  for (const auto& [name, s] : ledger.per_scope) {
    std::smatch m;
    if (std::regex_match(name, m, level_re)) lv.emplace_back(std::stoll(m[1].str()), row_of(name, s));
    else rep.other.push_back(row_of(name, s));
  }
  std::sort(lv.begin(), lv.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [_, r] : lv) {
    add(rep.total, r);
    rep.levels.push_back(std::move(r));
  }
  return rep;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json levels = nlohmann::json::array(), other = nlohmann::json::array();
  for (const auto& l : r.levels) levels.push_back(row_json(l));
  for (const auto& o : r.other) other.push_back(row_json(o));
  return {{"levels", levels}, {"total", row_json(r.total)}, {"other_scopes", other}};
}

std::string to_text(const Report& r) {
  auto cells = [](const ReportRow& x) {
    return std::vector<std::string>{x.label,
                                    std::to_string(x.launches),
                                    std::to_string(x.threads),
                                    std::to_string(x.h2d_bytes),
                                    std::to_string(x.d2h_bytes),
                                    std::to_string(x.external_calls)};
  };
  std::vector<std::vector<std::string>> rows{{"level", "launches", "threads", "h2d_bytes", "d2h_bytes", "externals"}};
  for (const auto& l : r.levels) rows.push_back(cells(l));
  rows.push_back(cells(r.total));
  std::string out = table(rows);

  std::vector<std::vector<std::string>> kr{{"level", "kernel", "launches", "threads"}};
  for (const auto& l : r.levels)
    for (const auto& [k, t] : l.kernels) kr.push_back({l.label, k, std::to_string(t.launches), std::to_string(t.threads)});
  if (kr.size() > 1) out += "\nper kernel\n" + table(kr);

  if (!r.other.empty()) {
    std::vector<std::vector<std::string>> orows{{"scope", "launches", "threads", "h2d_bytes", "d2h_bytes", "externals"}};
    for (const auto& o : r.other) orows.push_back(cells(o));
    out += "\nother scopes\n" + table(orows);
  }
  return out;
}

} // namespace loopport::mg
