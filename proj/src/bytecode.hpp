// SPDX-License-Identifier: Apache-2.0
// Register bytecode for one LoopKernel thread program.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loopport/loopir.hpp"

namespace loopport::vdev {

enum class Op : std::uint8_t {
  IConst, RConst, IMov, RMov, I2R, R2I,
  IAdd, ISub, IMul, IDiv, IMod, IPow, INeg, IAbs, IMin, IMax,
  RAdd, RSub, RMul, RDiv, RPow, RPowI, RNeg, RAbs, RSqrt, RExp, RLog, RMin, RMax, RMod,
  IEq, INe, ILt, ILe, IGt, IGe,
  REq, RNe, RLt, RLe, RGt, RGe,
  LAnd, LOr, LNot, LEqv, LNeqv,
  LoadR, LoadI, StoreR, StoreI,
  Jmp, Jz, Halt,
};

struct Ins {
  Op op;
  std::int32_t a = 0, b = 0, c = 0;
  std::int64_t imm = 0;
  double fimm = 0.0;
};

constexpr int kMaxRank = 7;

/// Array argument as seen by one launch: declared (dummy) bounds over a payload.
struct ArrayView {
  void* data = nullptr;
  bool is_int = false;
  int rank = 0;
  std::int64_t lower[kMaxRank] = {};
  std::int64_t extent[kMaxRank] = {};
  std::int64_t stride[kMaxRank] = {};
  const std::string* name = nullptr;
};

class CompiledKernel {
public:
  explicit CompiledKernel(const ir::LoopKernel& k);

  struct ArraySlot {
    std::string name; // lowercased
    bool is_int = false;
    int rank = 0;
  };
  struct ScalarSlot {
    std::string name; // lowercased
    bool is_int = true;
    int reg = 0;
  };

  const std::vector<ArraySlot>& arrays() const { return arrays_; }
  const std::vector<ScalarSlot>& scalars() const { return scalars_; }
  const std::vector<int>& grid_regs() const { return grid_regs_; }
  bool bounds_verified() const { return bounds_verified_; }
  int int_regs() const { return n_int_; }
  int real_regs() const { return n_real_; }
  const std::vector<Ins>& code() const { return code_; }

  /// Runs one thread. `coords` are the grid-axis values, used in error text.
  void run(std::int64_t* iregs, double* rregs, const ArrayView* views, bool check,
           const std::int64_t* coords, int naxes) const;

private:
  std::vector<Ins> code_;
  std::vector<ArraySlot> arrays_;
  std::vector<ScalarSlot> scalars_;
  std::vector<int> grid_regs_;
  int n_int_ = 0;
  int n_real_ = 0;
  bool bounds_verified_ = false;

  friend class Compiler;
};

} // namespace loopport::vdev
