// SPDX-License-Identifier: Apache-2.0
#include "loopport/vdevice.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "bytecode.hpp"
#include "loopport/detail/arith.hpp"
#include "loopport/error.hpp"

namespace loopport::vdev {

std::size_t element_size(ElemType t) { return t == ElemType::Real64 ? 8 : 4; }

std::size_t Shape::element_count() const {
  std::size_t n = 1;
  for (const auto& d : dims) n *= static_cast<std::size_t>(std::max<std::int64_t>(d.extent(), 0));
  return n;
}

std::size_t Shape::offset(const std::int64_t* idx) const {
  std::size_t off = 0, stride = 1;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    off += static_cast<std::size_t>(idx[k] - dims[k].lower) * stride;
    stride *= static_cast<std::size_t>(dims[k].extent());
  }
  return off;
}

bool Shape::contains(const std::int64_t* idx) const {
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (idx[k] < dims[k].lower || idx[k] > dims[k].upper) return false;
  return true;
}

Shape shape_of(std::vector<std::int64_t> extents) {
  Shape s;
  for (auto e : extents) s.dims.push_back({1, e});
  return s;
}

namespace {

Payload make_payload(ElemType t, std::size_t n) {
  if (t == ElemType::Real64) return std::vector<double>(n, 0.0);
  return std::vector<std::int32_t>(n, 0);
}

std::size_t payload_size(const Payload& p) {
  return std::visit([](const auto& v) { return v.size(); }, p);
}

bool writes(Mode m) { return m != Mode::Read; }

Mode merge(Mode a, Mode b) { return a == b ? a : Mode::ReadWrite; }

struct BusyGuard {
  std::atomic<bool>& flag;
  explicit BusyGuard(std::atomic<bool>& f) : flag(f) {
    if (flag.exchange(true))
      throw Error(ErrorCode::DeviceBusy, "launch issued while another launch is running");
  }
  ~BusyGuard() { flag.store(false); }
};

} // namespace

Device::Device() = default;
Device::~Device() = default;

BufferId Device::create(const Shape& shape, ElemType type, Initial initial) {
  if (shape.dims.empty() || static_cast<int>(shape.dims.size()) > kMaxRank)
    throw Error(ErrorCode::BadShape, "buffer rank must be 1..7");
  for (const auto& d : shape.dims)
    if (d.extent() < 1)
      throw Error(ErrorCode::BadShape, "empty or inverted dimension " + std::to_string(d.lower) +
                                           ":" + std::to_string(d.upper));
  Buffer b;
  b.st.shape = shape;
  b.st.type = type;
  std::size_t n = shape.element_count();
  if (initial != Initial::Device) {
    b.host = make_payload(type, n);
    b.st.has_host = true;
  }
  if (initial != Initial::Host) {
    b.device = make_payload(type, n);
    b.st.has_device = true;
  }
  BufferId id = next_id_++;
  buffers_.emplace(id, std::move(b));
  return id;
}

Device::Buffer& Device::live(BufferId id) {
  return const_cast<Buffer&>(static_cast<const Device*>(this)->live(id));
}

const Device::Buffer& Device::live(BufferId id) const {
  auto it = buffers_.find(id);
  if (it != buffers_.end()) return it->second;
  if (freed_.count(id)) throw Error(ErrorCode::UseAfterFree, "buffer " + std::to_string(id) + " was destroyed");
  throw Error(ErrorCode::UseAfterFree, "unknown buffer " + std::to_string(id));
}

void Device::destroy(BufferId id) {
  live(id);
  buffers_.erase(id);
  freed_[id] = true;
}

bool Device::alive(BufferId id) const { return buffers_.count(id) != 0; }

const BufferState& Device::state(BufferId id) const { return live(id).st; }

void Device::record(const TransferEvent& e) {
  ScopeTotals& s = ledger_.per_scope[scope_];
  if (e.direction == Direction::H2D) {
    ++ledger_.h2d_count;
    ledger_.h2d_bytes += e.bytes;
    ++s.h2d_count;
    s.h2d_bytes += e.bytes;
  } else {
    ++ledger_.d2h_count;
    ledger_.d2h_bytes += e.bytes;
    ++s.d2h_count;
    s.d2h_bytes += e.bytes;
  }
}

std::vector<TransferEvent> Device::access(BufferId id, Side side, Mode mode, std::size_t batch) {
  Buffer& b = live(id);
  BufferState& st = b.st;
  if (b.batch_left > 0 && b.batch_side == side && b.batch_mode == mode) {
    --b.batch_left;
  } else {
    ++st.tracking_events;
    b.batch_side = side;
    b.batch_mode = mode;
    b.batch_left = batch > 0 ? batch - 1 : 0;
  }

  std::vector<TransferEvent> out;
  bool on_host = side == Side::Host;
  bool has_here = on_host ? st.has_host : st.has_device;
  bool other_dirty = on_host ? st.device_dirty : st.host_dirty;
  if (!has_here || other_dirty) {
    auto& src = on_host ? b.device : b.host;
    auto& dst = on_host ? b.host : b.device;
    if (!src) throw Error(ErrorCode::BadShape, "buffer has no valid copy");
    dst = *src;
    TransferEvent e{on_host ? Direction::D2H : Direction::H2D, id,
                    st.shape.element_count() * element_size(st.type)};
    record(e);
    out.push_back(e);
    (on_host ? st.has_host : st.has_device) = true;
    st.host_dirty = st.device_dirty = false;
  }
  if (writes(mode)) {
    st.host_dirty = on_host;
    st.device_dirty = !on_host;
  }
  return out;
}

Payload& Device::payload(BufferId id, Side side) {
  Buffer& b = live(id);
  auto& p = side == Side::Host ? b.host : b.device;
  if (!p) throw Error(ErrorCode::BadShape, "no copy on that side");
  return *p;
}

double Device::host_load(BufferId id, std::size_t offset) {
  access(id, Side::Host, Mode::Read);
  const Payload& p = payload(id, Side::Host);
  if (offset >= payload_size(p)) throw Error(ErrorCode::OutOfBoundsAccess, "host offset out of range");
  return std::visit([&](const auto& v) { return static_cast<double>(v[offset]); }, p);
}

void Device::host_store(BufferId id, std::size_t offset, double value) {
  access(id, Side::Host, Mode::Write);
  Payload& p = payload(id, Side::Host);
  if (offset >= payload_size(p)) throw Error(ErrorCode::OutOfBoundsAccess, "host offset out of range");
  if (auto* d = std::get_if<std::vector<double>>(&p)) (*d)[offset] = value;
  else std::get<std::vector<std::int32_t>>(p)[offset] = arith::narrow(arith::to_int(value));
}

void Device::upload(BufferId id, const Payload& data) {
  Buffer& b = live(id);
  bool same_type = (b.st.type == ElemType::Real64) == std::holds_alternative<std::vector<double>>(data);
  if (!same_type || payload_size(data) != b.st.shape.element_count())
    throw Error(ErrorCode::BadShape, "upload does not match buffer shape or type");
  access(id, Side::Host, Mode::Write);
  *b.host = data;
}

Payload Device::download(BufferId id) {
  access(id, Side::Host, Mode::Read);
  return payload(id, Side::Host);
}

void Device::count_external_call() {
  ++ledger_.external_calls;
  ++ledger_.per_scope[scope_].external_calls;
}

const CompiledKernel& Device::compiled(const std::shared_ptr<const ir::LoopKernel>& k) {
  auto it = cache_.find(k.get());
  if (it != cache_.end()) return *it->second.second;
  auto ck = std::make_unique<CompiledKernel>(*k);
  auto& slot = cache_[k.get()];
  slot.first = k;
  slot.second = std::move(ck);
  return *slot.second;
}

LaunchStats Device::launch(const LaunchPlan& plan) {
  BusyGuard guard(busy_);
  if (!plan.kernel) throw Error(ErrorCode::BindingMismatch, "launch without a kernel");
  const ir::LoopKernel& k = *plan.kernel;
  if (k.grid_axes < 1) throw Error(ErrorCode::LoweringFailed, "kernel " + k.name + " has no grid mapping");
  const CompiledKernel& ck = compiled(plan.kernel);

  for (const auto& [name, _] : plan.args)
    if (!k.param(name)) throw Error(ErrorCode::BindingMismatch, "no parameter named " + name + " in " + k.name);

  auto arg = [&](const std::string& name) -> const Binding& {
    auto it = plan.args.find(name);
    if (it == plan.args.end()) throw Error(ErrorCode::BindingMismatch, "missing argument " + name + " for " + k.name);
    return it->second;
  };

  std::vector<std::int64_t> iregs(static_cast<std::size_t>(ck.int_regs()), 0);
  std::vector<double> rregs(static_cast<std::size_t>(ck.real_regs()), 0.0);
  std::map<std::string, std::int64_t> int_scalars;
  for (const auto& c : k.constants)
    if (auto* v = std::get_if<std::int64_t>(&c.value)) int_scalars[frontend::lower(c.name)] = *v;
  for (const auto& s : ck.scalars()) {
    const Binding& b = arg(s.name);
    if (s.is_int) {
      auto* v = std::get_if<std::int64_t>(&b);
      if (!v) throw Error(ErrorCode::BindingMismatch, "argument " + s.name + " must be an integer scalar");
      iregs[static_cast<std::size_t>(s.reg)] = *v;
      int_scalars[s.name] = *v;
    } else if (auto* d = std::get_if<double>(&b)) {
      rregs[static_cast<std::size_t>(s.reg)] = *d;
    } else if (auto* i = std::get_if<std::int64_t>(&b)) {
      rregs[static_cast<std::size_t>(s.reg)] = static_cast<double>(*i);
    } else {
      throw Error(ErrorCode::BindingMismatch, "argument " + s.name + " must be a real scalar");
    }
  }
  auto lookup = [&](const std::string& n) -> std::optional<std::int64_t> {
    auto it = int_scalars.find(frontend::lower(n));
    if (it == int_scalars.end()) return std::nullopt;
    return it->second;
  };
  auto eval = [&](const frontend::ExprPtr& e, const std::string& what) {
    auto v = ir::eval_int(*e, lookup);
    if (!v) throw Error(ErrorCode::BindingMismatch, "cannot evaluate " + what + " of " + k.name);
    return *v;
  };

  // Views over declared bounds; one device access per distinct buffer.
  std::vector<ArrayView> views(ck.arrays().size());
  std::map<BufferId, Mode> modes;
  std::vector<std::string> loaded = k.loaded_arrays(), stored = k.stored_arrays();
  auto in = [](const std::vector<std::string>& v, const std::string& n) {
    return std::find(v.begin(), v.end(), n) != v.end();
  };
  std::vector<BufferId> ids(views.size());
  for (std::size_t s = 0; s < views.size(); ++s) {
    const auto& slot = ck.arrays()[s];
    const Binding& b = arg(slot.name);
    auto* id = std::get_if<BufferId>(&b);
    if (!id) throw Error(ErrorCode::BindingMismatch, "argument " + slot.name + " must be a buffer");
    const BufferState& st = live(*id).st;
    if ((st.type == ElemType::Int32) != slot.is_int)
      throw Error(ErrorCode::BindingMismatch, "element type of buffer for " + slot.name + " differs");
    const ir::KernelParam* p = k.param(slot.name);
    ArrayView& v = views[s];
    v.is_int = slot.is_int;
    v.rank = slot.rank;
    v.name = &slot.name;
    std::int64_t stride = 1;
    for (int d = 0; d < slot.rank; ++d) {
      const auto& dim = p->bounds[static_cast<std::size_t>(d)];
      std::int64_t lo = dim.lower ? eval(dim.lower, "bounds of " + slot.name) : 1;
      std::int64_t hi = eval(dim.upper, "bounds of " + slot.name);
      v.lower[d] = lo;
      v.extent[d] = std::max<std::int64_t>(hi - lo + 1, 0);
      v.stride[d] = stride;
      stride *= v.extent[d];
    }
    if (static_cast<std::size_t>(stride) > st.shape.element_count())
      throw Error(ErrorCode::BindingMismatch, "declared size of " + slot.name + " (" + std::to_string(stride) +
                                                  ") exceeds buffer size (" +
                                                  std::to_string(st.shape.element_count()) + ")");
    Mode m = in(stored, slot.name) ? (in(loaded, slot.name) ? Mode::ReadWrite : Mode::Write) : Mode::Read;
    auto [it, fresh] = modes.emplace(*id, m);
    if (!fresh) it->second = merge(it->second, m);
    ids[s] = *id;
  }

  LaunchStats stats;
  std::uint64_t total = 1;
  std::vector<std::int64_t> lows;
  for (int a = 0; a < k.grid_axes; ++a) {
    const auto& dom = k.domains[static_cast<std::size_t>(a)];
    std::int64_t lo = eval(dom.lower, "bounds of " + dom.var);
    std::int64_t hi = eval(dom.upper, "bounds of " + dom.var);
    if (hi < lo)
      throw Error(ErrorCode::EmptyDomain, "grid axis " + dom.var + " has extent " + std::to_string(hi - lo + 1) +
                                              " in " + k.name);
    lows.push_back(lo);
    stats.grid.push_back(hi - lo + 1);
    total *= static_cast<std::uint64_t>(hi - lo + 1);
  }

  for (auto [id, m] : modes) {
    auto ev = access(id, Side::Device, m);
    stats.transfers.insert(stats.transfers.end(), ev.begin(), ev.end());
  }
  for (std::size_t s = 0; s < views.size(); ++s)
    views[s].data = std::visit([](auto& vec) -> void* { return vec.data(); }, *live(ids[s]).device);

  bool check = !ck.bounds_verified();
  stats.bounds_checked = check;
  const int naxes = k.grid_axes;
  const auto& gr = ck.grid_regs();
  std::vector<std::int64_t> it_regs(iregs.size());
  std::vector<double> rt_regs(rregs.size());
  std::int64_t coords[2] = {0, 0};
  auto run_thread = [&](std::uint64_t tid) {
    // axis 0 varies slowest
    for (int a = naxes - 1; a >= 0; --a) {
      auto ext = static_cast<std::uint64_t>(stats.grid[static_cast<std::size_t>(a)]);
      coords[a] = lows[static_cast<std::size_t>(a)] + static_cast<std::int64_t>(tid % ext);
      tid /= ext;
    }
    std::copy(iregs.begin(), iregs.end(), it_regs.begin());
    std::copy(rregs.begin(), rregs.end(), rt_regs.begin());
    for (int a = 0; a < naxes; ++a) it_regs[static_cast<std::size_t>(gr[static_cast<std::size_t>(a)])] = coords[a];
    ck.run(it_regs.data(), rt_regs.data(), views.data(), check, coords, naxes);
  };
  if (plan.schedule.kind == ScheduleKind::Natural) {
    for (std::uint64_t t = 0; t < total; ++t) run_thread(t);
  } else {
    std::vector<std::uint64_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(plan.schedule.seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto t : order) run_thread(t);
  }

  stats.threads = total;
  ++ledger_.launches;
  ++ledger_.per_kernel_launches[k.name];
  ledger_.per_kernel_threads[k.name] += total;
  ScopeTotals& sc = ledger_.per_scope[scope_];
  ++sc.launches;
  sc.threads += total;
  ++sc.kernel_launches[k.name];
  sc.kernel_threads[k.name] += total;
  return stats;
}

// ledger JSON

nlohmann::json to_json(const TransferLedger& l) {
  using nlohmann::json;
  json kernels = json::object();
  for (const auto& [name, n] : l.per_kernel_launches)
    kernels[name] = {{"launches", n}, {"threads", l.per_kernel_threads.count(name) ? l.per_kernel_threads.at(name) : 0}};
  json scopes = json::object();
  for (const auto& [name, s] : l.per_scope) {
    json sk = json::object();
    for (const auto& [kn, n] : s.kernel_launches)
      sk[kn] = {{"launches", n}, {"threads", s.kernel_threads.count(kn) ? s.kernel_threads.at(kn) : 0}};
    scopes[name] = {{"launches", s.launches},   {"threads", s.threads},
                    {"h2d_count", s.h2d_count}, {"d2h_count", s.d2h_count},
                    {"h2d_bytes", s.h2d_bytes}, {"d2h_bytes", s.d2h_bytes},
                    {"external_calls", s.external_calls}, {"kernels", sk}};
  }
  return {{"h2d_count", l.h2d_count}, {"d2h_count", l.d2h_count}, {"h2d_bytes", l.h2d_bytes},
          {"d2h_bytes", l.d2h_bytes}, {"launches", l.launches},   {"external_calls", l.external_calls},
          {"kernels", kernels},       {"scopes", scopes}};
}

TransferLedger ledger_from_json(const nlohmann::json& j) {
  try {
    auto u = [](const nlohmann::json& o, const char* key) { return o.at(key).get<std::uint64_t>(); };
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "ledger must be a JSON object");
    TransferLedger l;
    l.h2d_count = u(j, "h2d_count");
    l.d2h_count = u(j, "d2h_count");
    l.h2d_bytes = u(j, "h2d_bytes");
    l.d2h_bytes = u(j, "d2h_bytes");
    l.launches = u(j, "launches");
    l.external_calls = u(j, "external_calls");
    for (const auto& [name, v] : j.at("kernels").items()) {
      l.per_kernel_launches[name] = u(v, "launches");
      l.per_kernel_threads[name] = u(v, "threads");
    }
    for (const auto& [name, v] : j.at("scopes").items()) {
      ScopeTotals s;
      s.launches = u(v, "launches");
      s.threads = u(v, "threads");
      s.h2d_count = u(v, "h2d_count");
      s.d2h_count = u(v, "d2h_count");
      s.h2d_bytes = u(v, "h2d_bytes");
      s.d2h_bytes = u(v, "d2h_bytes");
      s.external_calls = u(v, "external_calls");
      for (const auto& [kn, kv] : v.at("kernels").items()) {
        s.kernel_launches[kn] = u(kv, "launches");
        s.kernel_threads[kn] = u(kv, "threads");
      }
      l.per_scope[name] = std::move(s);
    }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed ledger: ") + e.what());
  }
}

} // namespace loopport::vdev
