// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "loopport/loopir.hpp"

namespace loopport::vdev {

enum class ElemType { Real64, Int32 };
enum class Side { Host, Device };
enum class Mode { Read, Write, ReadWrite };
enum class Initial { Host, Device, ZeroedBoth };

std::size_t element_size(ElemType t);

struct Dim {
  std::int64_t lower = 1;
  std::int64_t upper = 0;
  std::int64_t extent() const { return upper - lower + 1; }
  bool operator==(const Dim&) const = default;
};

struct Shape {
  std::vector<Dim> dims;
  std::size_t element_count() const;
  int rank() const { return static_cast<int>(dims.size()); }
  /// Column-major offset of a Fortran index tuple; no bounds check.
  std::size_t offset(const std::int64_t* idx) const;
  bool contains(const std::int64_t* idx) const;
  bool operator==(const Shape&) const = default;
};
Shape shape_of(std::vector<std::int64_t> extents); // all lower bounds 1

using BufferId = std::uint64_t;
using Payload = std::variant<std::vector<double>, std::vector<std::int32_t>>;

enum class Direction { H2D, D2H };

struct TransferEvent {
  Direction direction;
  BufferId buffer;
  std::size_t bytes;
  bool operator==(const TransferEvent&) const = default;
};

struct BufferState {
  Shape shape;
  ElemType type = ElemType::Real64;
  bool has_host = false;
  bool has_device = false;
  bool host_dirty = false;
  bool device_dirty = false;
  std::uint64_t tracking_events = 0; // accesses not absorbed by a batch
};

struct ScopeTotals {
  std::uint64_t launches = 0;
  std::uint64_t threads = 0;
  std::uint64_t h2d_count = 0, d2h_count = 0, h2d_bytes = 0, d2h_bytes = 0;
  std::uint64_t external_calls = 0;
  std::map<std::string, std::uint64_t> kernel_launches;
  std::map<std::string, std::uint64_t> kernel_threads;
  bool operator==(const ScopeTotals&) const = default;
};

struct TransferLedger {
  std::uint64_t h2d_count = 0, d2h_count = 0, h2d_bytes = 0, d2h_bytes = 0;
  std::uint64_t launches = 0;
  std::map<std::string, std::uint64_t> per_kernel_launches;
  std::map<std::string, std::uint64_t> per_kernel_threads;
  std::uint64_t external_calls = 0;
  std::map<std::string, ScopeTotals> per_scope;
  bool operator==(const TransferLedger&) const = default;
};

nlohmann::json to_json(const TransferLedger& l);
/// Throws BadConfig for documents that do not follow the schema.
TransferLedger ledger_from_json(const nlohmann::json& j);

enum class ScheduleKind { Natural, Shuffled };
struct Schedule {
  ScheduleKind kind = ScheduleKind::Natural;
  std::uint64_t seed = 0;
  static Schedule natural() { return {}; }
  static Schedule shuffled(std::uint64_t seed) { return {ScheduleKind::Shuffled, seed}; }
};

using Binding = std::variant<BufferId, std::int64_t, double>;

struct LaunchPlan {
  std::shared_ptr<const ir::LoopKernel> kernel; // mapped
  std::map<std::string, Binding> args;          // keyed by lowercased param name
  Schedule schedule;
};

struct LaunchStats {
  std::uint64_t threads = 0;
  std::vector<std::int64_t> grid;
  std::vector<TransferEvent> transfers;
  bool bounds_checked = false; // dynamic checks were active
};

class CompiledKernel;

/// Simulated accelerator with separate host and device memory.
class Device {
public:
  Device();
  ~Device();
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  /// Throws BadShape for empty or inverted dimensions.
  BufferId create(const Shape& shape, ElemType type, Initial initial);
  void destroy(BufferId id);
  bool alive(BufferId id) const;
  const BufferState& state(BufferId id) const;

  /// Residency transitions for one access. `batch` > 1 lets the next
  /// batch-1 accesses with the same side and mode pass without tracking.
  std::vector<TransferEvent> access(BufferId id, Side side, Mode mode, std::size_t batch = 1);

  /// Raw payload of one side, without residency accounting. Call access()
  /// first. Throws UseAfterFree, or BadShape if that side holds no copy.
  Payload& payload(BufferId id, Side side);

  /// Host-side element access through the residency automaton.
  double host_load(BufferId id, std::size_t offset);
  void host_store(BufferId id, std::size_t offset, double value);

  /// Full host-side overwrite / copy-out, accounted as one host access.
  void upload(BufferId id, const Payload& data);
  Payload download(BufferId id);

  LaunchStats launch(const LaunchPlan& plan);

  TransferLedger ledger_snapshot() const { return ledger_; }
  void reset_ledger() { ledger_ = {}; }
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }
  void count_external_call();

  /// Kernels compiled so far; repeated launches reuse the cached result.
  std::size_t compiled_kernels() const { return cache_.size(); }

private:
  struct Buffer {
    BufferState st;
    std::optional<Payload> host;
    std::optional<Payload> device;
    Side batch_side = Side::Host;
    Mode batch_mode = Mode::Read;
    std::size_t batch_left = 0;
  };

  Buffer& live(BufferId id);
  const Buffer& live(BufferId id) const;
  void record(const TransferEvent& e);
  const CompiledKernel& compiled(const std::shared_ptr<const ir::LoopKernel>& k);

  std::map<BufferId, Buffer> buffers_;
  std::map<BufferId, bool> freed_;
  BufferId next_id_ = 1;
  TransferLedger ledger_;
  std::string scope_ = "default";
  std::map<const ir::LoopKernel*,
           std::pair<std::shared_ptr<const ir::LoopKernel>, std::unique_ptr<CompiledKernel>>>
      cache_;
  std::atomic<bool> busy_{false};
};

} // namespace loopport::vdev
