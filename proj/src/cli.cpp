// SPDX-License-Identifier: Apache-2.0
#include "loopport/cli.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "loopport/hostexec.hpp"
#include "loopport/loopir.hpp"
#include "loopport/mgcorpus.hpp"
#include "loopport/parser.hpp"
#include "loopport/regions.hpp"
#include "loopport/vdevice.hpp"

namespace loopport::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::vector<std::string> inputs;
  std::string out_dir;
  std::string kernel;
  std::string config;
  std::uint64_t seed = 42;
  std::string interp = "bilinear";
  std::int64_t threshold = 3;
  std::string format = "text";
  bool interp_set = false, threshold_set = false;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::BadConfig, "malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream o(p, std::ios::binary);
  if (!o) throw Error(ErrorCode::BadConfig, "cannot write " + p.string());
  o << s;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Parallel regions of one unit, named the way the host interpreter names them.
struct Region {
  std::string name;
  const regions::TaggedRegion* region;
};

std::vector<Region> parallel_regions(const frontend::ParsedUnit& u, const std::vector<regions::TaggedRegion>& rs) {
  std::vector<Region> out;
  std::string key = frontend::lower(u.sub.name);
  int n = 0;
  for (const auto& r : rs)
    if (r.kind == regions::RegionKind::Parallel) {
      ++n;
      out.push_back({n == 1 ? key : key + "_" + std::to_string(n), &r});
    }
  return out;
}

void report_error(std::ostream& err, const std::string& where, const std::exception& e) {
  err << where << ": error " << e.what() << "\n";
}

// translate

int cmd_translate(const Options& opt, std::ostream& out, std::ostream& err) {
  int status = Ok;
  for (const auto& file : opt.inputs) {
    std::string src;
    std::vector<frontend::ParsedUnit> units;
    try {
      src = read_text(file);
      units = frontend::parse_source(src);
    } catch (const Error& e) {
      report_error(err, file, e);
      status = Failure;
      continue;
    }
    int found = 0;
    for (const auto& u : units) {
      std::vector<regions::TaggedRegion> rs;
      try {
        rs = regions::extract_regions(u.sub);
      } catch (const Error& e) {
        report_error(err, file, e);
        status = Failure;
        continue;
      }
      for (const auto& [name, r] : parallel_regions(u, rs)) {
        ++found;
        try {
          ir::LoopKernel k = ir::map_grid(ir::lower_region(*r, u.symbols, name));
          for (const auto& w : k.warnings) err << file << ": " << ir::format(w) << "\n";
          std::string text = ir::emit_kernel_text(k);
          if (opt.out_dir.empty()) {
            out << text;
          } else {
            fs::path p = fs::path(opt.out_dir) / (name + ".kernel");
            write_text(p, text);
            out << p.string() << "\n";
          }
        } catch (const ir::LoweringError& e) {
          for (const auto& d : e.diagnostics()) err << file << ": " << ir::format(d) << "\n";
          status = Failure;
        } catch (const Error& e) {
          report_error(err, file, e);
          status = Failure;
        }
      }
    }
    if (found == 0 && status == Ok) err << file << ": warning: no tagged regions\n";
  }
  return status;
}

// run

std::int64_t json_int(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw Error(ErrorCode::BadConfig, what + " must be an integer");
  return v.get<std::int64_t>();
}

double json_real(const json& v, const std::string& what) {
  if (!v.is_number()) throw Error(ErrorCode::BadConfig, what + " must be a number");
  return v.get<double>();
}

// Nested JSON arrays follow subscript order: v[i][j] is A(lo1+i, lo2+j).
void fill_nested(const json& v, const vdev::Shape& s, int dim, std::vector<std::int64_t>& idx,
                 const std::function<void(std::size_t, const json&)>& put, const std::string& name) {
  const auto& d = s.dims[static_cast<std::size_t>(dim)];
  if (!v.is_array() || static_cast<std::int64_t>(v.size()) != d.extent())
    throw Error(ErrorCode::BadConfig, "values for " + name + " do not match dimension " + std::to_string(dim + 1) +
                                          " (extent " + std::to_string(d.extent()) + ")");
  for (std::int64_t k = 0; k < d.extent(); ++k) {
    idx[static_cast<std::size_t>(dim)] = d.lower + k;
    const json& e = v[static_cast<std::size_t>(k)];
    if (dim + 1 == s.rank()) put(s.offset(idx.data()), e);
    else fill_nested(e, s, dim + 1, idx, put, name);
  }
}

json nested_of(const vdev::Payload& p, const vdev::Shape& s, int dim, std::vector<std::int64_t>& idx) {
  json a = json::array();
  const auto& d = s.dims[static_cast<std::size_t>(dim)];
  for (std::int64_t k = 0; k < d.extent(); ++k) {
    idx[static_cast<std::size_t>(dim)] = d.lower + k;
    if (dim + 1 == s.rank()) {
      std::size_t off = s.offset(idx.data());
      std::visit([&](const auto& v) { a.push_back(v[off]); }, p);
    } else {
      a.push_back(nested_of(p, s, dim + 1, idx));
    }
  }
  return a;
}

struct RunSetup {
  std::map<std::string, vdev::Binding> args;
  std::vector<std::pair<std::string, vdev::Shape>> arrays;
};

RunSetup bind_inputs(vdev::Device& d, const ir::LoopKernel& k, const json& values) {
  if (!values.is_object()) throw Error(ErrorCode::BadConfig, "input values must be a JSON object");
  for (auto it = values.begin(); it != values.end(); ++it)
    if (!k.param(frontend::lower(it.key())))
      throw Error(ErrorCode::BadConfig, "kernel " + k.name + " has no parameter " + it.key());
  auto find = [&](const std::string& key) -> const json* {
    for (auto it = values.begin(); it != values.end(); ++it)
      if (frontend::lower(it.key()) == key) return &*it;
    return nullptr;
  };
  RunSetup s;
  std::map<std::string, std::int64_t> ints;
  for (const auto& c : k.constants)
    if (auto* v = std::get_if<std::int64_t>(&c.value)) ints[frontend::lower(c.name)] = *v;
  for (const auto& p : k.params) {
    if (p.is_array) continue;
    std::string key = frontend::lower(p.name);
    const json* v = find(key);
    if (!v) throw Error(ErrorCode::BadConfig, "missing value for scalar " + key);
    if (p.type == frontend::BaseType::Integer) {
      std::int64_t i = json_int(*v, key);
      s.args[key] = i;
      ints[key] = i;
    } else {
      s.args[key] = json_real(*v, key);
    }
  }
  auto lookup = [&](const std::string& n) -> std::optional<std::int64_t> {
    auto it = ints.find(n);
    if (it == ints.end()) return std::nullopt;
    return it->second;
  };
  for (const auto& p : k.params) {
    if (!p.is_array) continue;
    std::string key = frontend::lower(p.name);
    vdev::Shape shape;
    for (const auto& b : p.bounds) {
      auto lo = b.lower ? ir::eval_int(*b.lower, lookup) : std::optional<std::int64_t>(1);
      auto hi = ir::eval_int(*b.upper, lookup);
      if (!lo || !hi) throw Error(ErrorCode::BadConfig, "cannot evaluate the bounds of " + key);
      shape.dims.push_back({*lo, *hi});
    }
    vdev::ElemType et = host::Interpreter::elem_type(p.type);
    vdev::BufferId id = d.create(shape, et, vdev::Initial::Host);
    vdev::Payload data = et == vdev::ElemType::Int32 ? vdev::Payload(std::vector<std::int32_t>(shape.element_count(), 0))
                                                     : vdev::Payload(std::vector<double>(shape.element_count(), 0.0));
    if (const json* v = find(key)) {
      std::vector<std::int64_t> idx(static_cast<std::size_t>(shape.rank()));
      auto put = [&](std::size_t off, const json& e) {
        if (auto* iv = std::get_if<std::vector<std::int32_t>>(&data)) (*iv)[off] = static_cast<std::int32_t>(json_int(e, key));
        else std::get<std::vector<double>>(data)[off] = json_real(e, key);
      };
      fill_nested(*v, shape, 0, idx, put, key);
    }
    d.upload(id, data);
    s.args[key] = id;
    s.arrays.emplace_back(key, shape);
  }
  return s;
}

bool same_bits(const vdev::Payload& a, const vdev::Payload& b, std::size_t& where) {
  return std::visit(
      [&](const auto& x) {
        const auto& y = std::get<std::decay_t<decltype(x)>>(b);
        for (where = 0; where < x.size(); ++where)
          if (std::memcmp(&x[where], &y[where], sizeof(x[where])) != 0) return false;
        return true;
      },
      a);
}

int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.inputs.size() != 1) throw Error(ErrorCode::BadConfig, "run takes exactly one --input source");
  const std::string& file = opt.inputs.front();
  std::shared_ptr<const ir::LoopKernel> kernel;
  std::vector<std::string> seen;
  for (const auto& u : frontend::parse_source(read_text(file))) {
    auto rs = regions::extract_regions(u.sub);
    for (const auto& [name, r] : parallel_regions(u, rs)) {
      seen.push_back(name);
      if (!opt.kernel.empty() && frontend::lower(opt.kernel) != name) continue;
      if (kernel) throw Error(ErrorCode::BadConfig, file + " has several kernels; pick one with --kernel");
      try {
        kernel = std::make_shared<const ir::LoopKernel>(ir::map_grid(ir::lower_region(*r, u.symbols, name)));
      } catch (const ir::LoweringError& e) {
        for (const auto& d : e.diagnostics()) err << file << ": " << ir::format(d) << "\n";
        return Failure;
      }
    }
  }
  if (!kernel) {
    std::string list;
    for (const auto& s : seen) list += (list.empty() ? "" : ", ") + s;
    throw Error(ErrorCode::BadConfig, "no kernel " + (opt.kernel.empty() ? std::string("found") : opt.kernel) +
                                          " in " + file + (list.empty() ? "" : " (available: " + list + ")"));
  }
  for (const auto& w : kernel->warnings) err << file << ": " << ir::format(w) << "\n";
  json values = opt.config.empty() ? json::object() : read_json(opt.config);

  vdev::Device natural, shuffled;
  RunSetup a = bind_inputs(natural, *kernel, values);
  RunSetup b = bind_inputs(shuffled, *kernel, values);
  natural.launch({kernel, a.args, vdev::Schedule::natural()});
  shuffled.launch({kernel, b.args, vdev::Schedule::shuffled(opt.seed)});
  vdev::TransferLedger ledger = natural.ledger_snapshot();

  json outputs = json::object();
  std::string mismatch;
  for (std::size_t k = 0; k < a.arrays.size(); ++k) {
    const auto& [name, shape] = a.arrays[k];
    vdev::Payload pa = natural.download(std::get<vdev::BufferId>(a.args.at(name)));
    vdev::Payload pb = shuffled.download(std::get<vdev::BufferId>(b.args.at(name)));
    std::size_t where = 0;
    if (mismatch.empty() && !same_bits(pa, pb, where))
      mismatch = name + " differs at element " + std::to_string(where) + " (seed " + std::to_string(opt.seed) + ")";
    std::vector<std::int64_t> idx(static_cast<std::size_t>(shape.rank()));
    outputs[name] = nested_of(pa, shape, 0, idx);
  }
  if (opt.out_dir.empty()) {
    out << dump(outputs);
  } else {
    write_text(fs::path(opt.out_dir) / "outputs.json", dump(outputs));
    write_text(fs::path(opt.out_dir) / "ledger.json", dump(vdev::to_json(ledger)));
  }
  if (!mismatch.empty()) {
    err << "error: schedule-dependent result: " << mismatch << "\n";
    return ScheduleDependent;
  }
  return Ok;
}

// solve

std::function<double(double, double)> grid_field(const json& spec, const fs::path& base, std::int64_t n) {
  if (!spec.is_object() || !spec.contains("grid") || !spec["grid"].is_string() || spec.size() != 1)
    throw Error(ErrorCode::BadConfig, "D must be \"constant\", \"piecewise\", \"anisotropic\" or {\"grid\": path}");
  fs::path p = spec["grid"].get<std::string>();
  if (p.is_relative()) p = base / p;
  json g = read_json(p);
  const std::int64_t P = n + 2;
  if (!g.is_array() || static_cast<std::int64_t>(g.size()) != P * P)
    throw Error(ErrorCode::BadConfig, p.string() + " must hold " + std::to_string(P * P) + " nodal values");
  auto vals = std::make_shared<std::vector<double>>();
  for (const auto& v : g) vals->push_back(json_real(v, "grid value"));
  const double h = 1.0 / static_cast<double>(n + 1);
  return [vals, P, h](double x, double y) {
    auto i = static_cast<std::int64_t>(std::llround(x / h));
    auto j = static_cast<std::int64_t>(std::llround(y / h));
    return (*vals)[static_cast<std::size_t>(j * P + i)];
  };
}

mg::InterpKind interp_kind(const std::string& s) {
  if (s == "bilinear") return mg::InterpKind::Bilinear;
  if (s == "collapsed") return mg::InterpKind::Collapsed;
  throw Error(ErrorCode::BadConfig, "interp must be bilinear or collapsed, got " + s);
}

int cmd_solve(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.config.empty()) throw Error(ErrorCode::BadConfig, "solve needs --config");
  json cfg = read_json(opt.config);
  if (!cfg.is_object()) throw Error(ErrorCode::BadConfig, "config must be a JSON object");
  static const std::set<std::string> known{"n", "D", "f", "eps", "cycles", "tol", "maxiter", "threshold", "interp"};
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (!known.count(it.key())) throw Error(ErrorCode::BadConfig, "unknown config field " + it.key());
  if (!cfg.contains("n")) throw Error(ErrorCode::BadConfig, "config needs n");
  std::int64_t n = json_int(cfg["n"], "n");
  double f = cfg.contains("f") ? json_real(cfg["f"], "f") : 1.0;
  double eps = cfg.contains("eps") ? json_real(cfg["eps"], "eps") : 1e-3;
  double tol = cfg.contains("tol") ? json_real(cfg["tol"], "tol") : 1e-8;
  int maxiter = cfg.contains("maxiter") ? static_cast<int>(json_int(cfg["maxiter"], "maxiter")) : 50;
  mg::MgOptions mo;
  if (cfg.contains("cycles")) {
    const json& c = cfg["cycles"];
    if (!c.is_object()) throw Error(ErrorCode::BadConfig, "cycles must be {\"nu1\": .., \"nu2\": ..}");
    for (auto it = c.begin(); it != c.end(); ++it)
      if (it.key() != "nu1" && it.key() != "nu2") throw Error(ErrorCode::BadConfig, "unknown cycles field " + it.key());
    if (c.contains("nu1")) mo.nu1 = static_cast<int>(json_int(c["nu1"], "nu1"));
    if (c.contains("nu2")) mo.nu2 = static_cast<int>(json_int(c["nu2"], "nu2"));
  }
  mo.threshold = opt.threshold_set || !cfg.contains("threshold") ? opt.threshold : json_int(cfg["threshold"], "threshold");
  std::string ik = opt.interp;
  if (!opt.interp_set && cfg.contains("interp")) {
    if (!cfg["interp"].is_string()) throw Error(ErrorCode::BadConfig, "interp must be a string");
    ik = cfg["interp"].get<std::string>();
  }
  mo.interp = interp_kind(ik);

  mg::ProblemSpec spec = mg::poisson(n);
  const json d = cfg.contains("D") ? cfg["D"] : json("constant");
  if (d == "piecewise") spec = mg::piecewise(n);
  else if (d == "anisotropic") spec.dy = [eps](double, double) { return eps; };
  else if (d != "constant") spec.dx = spec.dy = grid_field(d, fs::path(opt.config).parent_path(), n);
  spec.f = [f](double, double) { return f; };

  mg::Problem prob = mg::build_problem(spec);
  host::Program program = mg::load_corpus();
  host::ExternalRegistry reg;
  host::register_builtin_externals(reg);
  vdev::Device dev;
  host::Interpreter in(program, reg, dev);
  mg::Multigrid solver(in, prob.op, mo);

  fs::path dir = opt.out_dir.empty() ? fs::path(".") : fs::path(opt.out_dir);
  std::vector<double> history;
  int status = Ok;
  std::optional<mg::SolveResult> res;
  try {
    res = solver.solve(prob.rhs, tol, maxiter);
    history = res->history;
  } catch (const mg::NotConvergedError& e) {
    history = e.history();
    err << "error " << e.what() << "\n";
    status = NotConverged;
  }
  json hist = {{"converged", status == Ok}, {"cycles", history.size()}, {"history", history}};
  write_text(dir / "history.json", dump(hist));
  if (res) {
    json sol = {{"n", n}, {"layout", "padded column-major (n+2)^2"}, {"x", res->x}};
    write_text(dir / "solution.json", dump(sol));
  } else {
    fs::remove(dir / "solution.json");
  }
  vdev::TransferLedger ledger = dev.ledger_snapshot();
  mg::Report rep = mg::make_report(ledger);
  write_text(dir / "ledger.json", dump(vdev::to_json(ledger)));
  write_text(dir / "report.json", dump(mg::to_json(rep)));
  write_text(dir / "report.txt", mg::to_text(rep));
  out << (opt.format == "json" ? dump(mg::to_json(rep)) : mg::to_text(rep));
  if (status == Ok)
    err << "converged in " << history.size() << " cycles on " << solver.levels().size() << " levels\n";
  return status;
}

// report

int cmd_report(const Options& opt, std::ostream& out, std::ostream&) {
  if (opt.inputs.size() != 1) throw Error(ErrorCode::BadConfig, "report takes exactly one --input ledger");
  mg::Report rep = mg::make_report(vdev::ledger_from_json(read_json(opt.inputs.front())));
  out << (opt.format == "json" ? dump(mg::to_json(rep)) : mg::to_text(rep));
  return Ok;
}

} // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translate tagged legacy loops, run them on a virtual device, and solve with multigrid"};
  app.require_subcommand(1);
  Options opt;
  auto* tr = app.add_subcommand("translate", "lower every tagged region and write kernel dumps");
  tr->add_option("--input,input", opt.inputs, "source files")->required()->check(CLI::ExistingFile);
  tr->add_option("--out-dir", opt.out_dir, "directory for <kernel>.kernel files; stdout when omitted");

  auto* run = app.add_subcommand("run", "run one kernel in natural and shuffled order and compare");
  run->add_option("--input", opt.inputs, "source file")->required()->check(CLI::ExistingFile);
  run->add_option("--kernel", opt.kernel, "kernel name (sub, sub_2, ...)");
  run->add_option("--config", opt.config, "JSON input values")->check(CLI::ExistingFile);
  run->add_option("--seed", opt.seed, "shuffle seed")->capture_default_str();
  run->add_option("--out-dir", opt.out_dir, "directory for outputs.json and ledger.json; stdout when omitted");

  auto* solve = app.add_subcommand("solve", "multigrid solve through the translated corpus");
  solve->add_option("--config", opt.config, "problem configuration")->required()->check(CLI::ExistingFile);
  solve->add_option("--out-dir", opt.out_dir, "artifact directory")->capture_default_str();
  auto* io = solve->add_option("--interp", opt.interp, "interpolation weights")
                 ->check(CLI::IsMember({"bilinear", "collapsed"}))
                 ->capture_default_str();
  auto* th = solve->add_option("--threshold", opt.threshold, "coarsest extent")->capture_default_str();
  solve->add_option("--seed", opt.seed, "unused by solve; accepted for uniformity");
  solve->add_option("--format", opt.format, "stdout report format")
      ->check(CLI::IsMember({"json", "text"}))
      ->capture_default_str();

  auto* rp = app.add_subcommand("report", "per-level table from a ledger JSON");
  rp->add_option("--input,input", opt.inputs, "ledger JSON")->required()->check(CLI::ExistingFile);
  rp->add_option("--format", opt.format, "output format")->check(CLI::IsMember({"json", "text"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? Ok : Failure;
  }
  opt.interp_set = io->count() > 0;
  opt.threshold_set = th->count() > 0;
  try {
    if (tr->parsed()) return cmd_translate(opt, out, err);
    if (run->parsed()) return cmd_run(opt, out, err);
    if (solve->parsed()) return cmd_solve(opt, out, err);
    return cmd_report(opt, out, err);
  } catch (const Error& e) {
    err << "error " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error " << e.what() << "\n";
  }
  return Failure;
}

} // namespace loopport::cli
