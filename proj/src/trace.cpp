// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/trace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "perfvec/error.hpp"
#include "perfvec/rng.hpp"

namespace perfvec::trace {

namespace {

constexpr std::array<std::string_view, kNumOpClasses> kOpNames = {
    "IALU", "IMUL", "IDIV", "FADD", "FMUL", "FDIV", "LOAD", "STORE", "CBRANCH", "JUMP", "NOP"};

constexpr std::array<std::string_view, 8> kWorkloadNames = {
    "stream", "pointer_chase", "matmul_tiled", "branchy",
    "mixed",  "stride_scan",   "reduce",       "stencil"};

constexpr std::uint64_t kElem = 8;

// Array k lives at (k + 1) * 256 MiB.
constexpr std::uint64_t region(int k) { return (static_cast<std::uint64_t>(k) + 1) << 28; }

Reg r(std::uint8_t n) { return n; }
constexpr Reg kNone = std::nullopt;

// Emits records for one static code layout: slot s sits at code_base + 4*s.
class Emitter {
 public:
  explicit Emitter(std::uint64_t code_base) : base_(code_base) {}

  std::uint64_t pc(std::uint32_t slot) const { return base_ + 4ULL * slot; }

  void op(std::uint32_t slot, OpClass op, Reg dst, Reg s1 = kNone, Reg s2 = kNone) {
    InstructionRecord rec;
    rec.pc = pc(slot);
    rec.op = op;
    rec.dst = dst;
    rec.src1 = s1;
    rec.src2 = s2;
    out_.push_back(rec);
  }

  void load(std::uint32_t slot, Reg dst, Reg base, std::uint64_t addr) {
    op(slot, OpClass::kLoad, dst, base);
    out_.back().mem_addr = addr;
  }

  void store(std::uint32_t slot, Reg value, Reg base, std::uint64_t addr) {
    op(slot, OpClass::kStore, kNone, value, base);
    out_.back().mem_addr = addr;
  }

  void cbranch(std::uint32_t slot, Reg cond, bool taken, std::uint32_t target_slot) {
    op(slot, OpClass::kCbranch, kNone, cond);
    out_.back().branch_taken = taken;
    out_.back().branch_target = pc(target_slot);
  }

  void jump(std::uint32_t slot, std::uint32_t target_slot) {
    op(slot, OpClass::kJump, kNone);
    out_.back().branch_taken = true;
    out_.back().branch_target = pc(target_slot);
  }

  // IALU rc <- rc + 1; CBRANCH rc back to head unless this is the last trip.
  void latch(std::uint32_t slot, std::uint8_t counter, bool last, std::uint32_t head) {
    op(slot, OpClass::kIalu, r(counter), r(counter));
    cbranch(slot + 1, r(counter), !last, head);
  }

  void prologue() {
    op(kPrologue + 0, OpClass::kIalu, r(28));
    op(kPrologue + 1, OpClass::kIalu, r(29));
    op(kPrologue + 2, OpClass::kIalu, r(30));
    op(kPrologue + 3, OpClass::kNop, kNone);
  }

  void epilogue() {
    op(kEpilogue + 0, OpClass::kNop, kNone);
    jump(kEpilogue + 1, kReturnSlot);
  }

  void fault_last() { out_.back().faulted = true; }

  std::vector<InstructionRecord> take() { return std::move(out_); }

  // Prologue/epilogue slots sit away from loop bodies (which start at 16).
  static constexpr std::uint32_t kPrologue = 0;
  static constexpr std::uint32_t kEpilogue = 8;
  static constexpr std::uint32_t kReturnSlot = 1024;

 private:
  std::uint64_t base_;
  std::vector<InstructionRecord> out_;
};

std::uint64_t code_base(WorkloadKind kind) {
  return 0x400000ULL + 0x10000ULL * static_cast<std::uint64_t>(kind);
}

class Params {
 public:
  Params(WorkloadKind kind, const WorkloadParams& given) : kind_(kind), values_(default_params(kind)) {
    for (const auto& [k, v] : given) {
      require(values_.count(k) != 0, ErrorKind::kParameter,
              "unknown parameter '" + k + "' for workload " + std::string(workload_name(kind)));
      require(std::isfinite(v), ErrorKind::kParameter, "parameter '" + k + "' is not finite");
      values_[k] = v;
    }
  }

  std::size_t count(const std::string& key, std::size_t lo, std::size_t hi) const {
    const double v = values_.at(key);
    require(v == std::floor(v) && v >= static_cast<double>(lo) && v <= static_cast<double>(hi),
            ErrorKind::kParameter,
            std::string(workload_name(kind_)) + ": parameter '" + key + "' must be an integer in [" +
                std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<std::size_t>(v);
  }

  double prob(const std::string& key) const {
    const double v = values_.at(key);
    require(v >= 0.0 && v <= 1.0, ErrorKind::kParameter,
            std::string(workload_name(kind_)) + ": parameter '" + key + "' must lie in [0, 1]");
    return v;
  }

  const WorkloadParams& values() const { return values_; }

 private:
  WorkloadKind kind_;
  WorkloadParams values_;
};

constexpr std::size_t kMaxCount = 10'000'000;

void emit_stream(Emitter& e, const Params& p) {
  const std::size_t len = p.count("len", 0, kMaxCount);
  const std::size_t passes = p.count("passes", 1, 1000);
  if (len == 0) return;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < len; ++i) {
      e.load(16, r(1), r(10), region(0) + kElem * i);
      e.load(17, r(2), r(10), region(1) + kElem * i);
      e.op(18, OpClass::kFmul, r(3), r(2), r(20));
      e.op(19, OpClass::kFadd, r(4), r(1), r(3));
      e.store(20, r(4), r(10), region(2) + kElem * i);
      e.latch(21, 10, i + 1 == len, 16);
    }
    e.op(23, OpClass::kIalu, r(10));
  }
}

void emit_pointer_chase(Emitter& e, const Params& p, Rng& rng) {
  const std::size_t nodes = p.count("nodes", 1, kMaxCount);
  const std::size_t steps = p.count("steps", 0, kMaxCount);
  constexpr std::uint64_t kNode = 64;
  // Sattolo's algorithm: a single cycle through every node.
  std::vector<std::uint32_t> next(nodes);
  std::iota(next.begin(), next.end(), 0U);
  for (std::size_t i = nodes - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1));
    std::swap(next[i], next[j]);
  }
  for (std::size_t i = 0; i < nodes; ++i) {
    e.store(16, r(5), r(11), region(0) + kNode * i);
    e.latch(17, 11, i + 1 == nodes, 16);
  }
  std::uint32_t cur = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    e.load(20, r(5), r(5), region(0) + kNode * cur);
    e.op(21, OpClass::kIalu, r(6), r(6), r(5));
    e.latch(22, 12, s + 1 == steps, 20);
    cur = next[cur];
  }
}

// Slots: 16 LOAD C, 17..22 k body+latch, 23 STORE C, 24/25 j latch,
// 26/27 i latch, 28/29 kk latch, 30/31 jj latch, 32/33 ii latch.
void emit_matmul(Emitter& e, std::size_t n, std::size_t tile) {
  const std::uint64_t a = region(0), b = region(1), c = region(2);
  const std::size_t tiles = n / tile;
  for (std::size_t ii = 0; ii < tiles; ++ii) {
    for (std::size_t jj = 0; jj < tiles; ++jj) {
      for (std::size_t kk = 0; kk < tiles; ++kk) {
        for (std::size_t i = ii * tile; i < (ii + 1) * tile; ++i) {
          for (std::size_t j = jj * tile; j < (jj + 1) * tile; ++j) {
            e.load(16, r(3), r(12), c + kElem * (i * n + j));
            for (std::size_t k = kk * tile; k < (kk + 1) * tile; ++k) {
              e.load(17, r(1), r(13), a + kElem * (i * n + k));
              e.load(18, r(2), r(14), b + kElem * (k * n + j));
              e.op(19, OpClass::kFmul, r(4), r(1), r(2));
              e.op(20, OpClass::kFadd, r(3), r(3), r(4));
              if (tile > 1) e.latch(21, 15, k + 1 == (kk + 1) * tile, 17);
            }
            e.store(23, r(3), r(12), c + kElem * (i * n + j));
            if (tile > 1) e.latch(24, 16, j + 1 == (jj + 1) * tile, 16);
          }
          if (tile > 1) e.latch(26, 17, i + 1 == (ii + 1) * tile, 16);
        }
        if (tiles > 1) e.latch(28, 18, kk + 1 == tiles, 16);
      }
      if (tiles > 1) e.latch(30, 19, jj + 1 == tiles, 16);
    }
    if (tiles > 1) e.latch(32, 20, ii + 1 == tiles, 16);
  }
}

void emit_branchy(Emitter& e, const Params& p, Rng& rng) {
  const std::size_t len = p.count("len", 0, kMaxCount);
  const double p1 = p.prob("p_taken");
  const double p2 = p.values().count("p_taken2") ? p.prob("p_taken2") : p1;
  const std::size_t phase = p.count("phase_len", 1, kMaxCount);
  for (std::size_t i = 0; i < len; ++i) {
    const double pt = ((i / phase) % 2 == 0) ? p1 : p2;
    const bool taken = rng.bernoulli(pt);
    e.load(16, r(1), r(10), region(0) + kElem * i);
    e.op(17, OpClass::kIalu, r(2), r(1));
    e.cbranch(18, r(2), taken, 22);
    if (taken) {
      e.op(22, OpClass::kImul, r(3), r(3), r(1));
      e.op(23, OpClass::kIalu, r(4), r(4), r(3));
    } else {
      e.op(19, OpClass::kIalu, r(5), r(5), r(1));
      e.op(20, OpClass::kIalu, r(5), r(5));
      e.jump(21, 24);
    }
    e.op(24, OpClass::kIalu, r(10), r(10));
    // Counted-loop latch; the last trip jumps to the epilogue instead.
    e.jump(25, i + 1 == len ? Emitter::kEpilogue : 16);
  }
}

void emit_mixed(Emitter& e, const Params& p, Rng& rng) {
  const std::size_t len = p.count("len", 0, kMaxCount);
  const std::size_t phase = p.count("phase_len", 1, kMaxCount);
  const double fault_rate = p.prob("fault_rate");
  constexpr std::uint64_t kBigLines = 1 << 16;  // 4 MiB random-access array
  std::size_t seq = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t kind = (i / phase) % 3;
    const bool last = (i + 1 == len) || ((i + 1) / phase != i / phase);
    if (kind == 0) {
      e.op(16, OpClass::kFdiv, r(1), r(1), r(2));
      e.op(17, OpClass::kFmul, r(3), r(1), r(3));
      e.op(18, OpClass::kIdiv, r(4), r(4), r(5));
      if (rng.bernoulli(fault_rate)) e.fault_last();
      e.latch(19, 10, last, 16);
    } else if (kind == 1) {
      const std::uint64_t line = rng.next() % kBigLines;
      e.op(24, OpClass::kIalu, r(6), r(6));
      e.load(25, r(7), r(6), region(1) + 64 * line);
      e.op(26, OpClass::kFadd, r(8), r(8), r(7));
      e.latch(27, 11, last, 24);
    } else {
      const bool taken = rng.bernoulli(0.5);
      e.load(32, r(1), r(12), region(0) + kElem * seq++);
      e.cbranch(33, r(1), taken, 35);
      if (!taken) e.op(34, OpClass::kIalu, r(9), r(9), r(1));
      e.op(35, OpClass::kIalu, r(13), r(13), r(1));
      e.latch(36, 12, last, 32);
    }
  }
}

void emit_stride_scan(Emitter& e, const Params& p) {
  const std::size_t len = p.count("len", 0, kMaxCount);
  const std::size_t stride = p.count("stride", 1, 1 << 20);
  for (std::size_t i = 0; i < len; ++i) {
    e.load(16, r(1), r(10), region(0) + kElem * stride * i);
    e.op(17, OpClass::kIalu, r(2), r(2), r(1));
    e.latch(18, 10, i + 1 == len, 16);
  }
}

void emit_reduce(Emitter& e, const Params& p) {
  const std::size_t len = p.count("len", 0, kMaxCount);
  const std::size_t passes = p.count("passes", 1, 1000);
  if (len == 0) return;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < len; ++i) {
      e.load(16, r(1), r(10), region(0) + kElem * i);
      e.op(17, OpClass::kFadd, r(2), r(2), r(1));
      e.latch(18, 10, i + 1 == len, 16);
    }
  }
}

void emit_stencil(Emitter& e, const Params& p) {
  const std::size_t n = p.count("n", 3, 4096);
  const std::size_t sweeps = p.count("sweeps", 1, 1000);
  for (std::size_t s = 0; s < sweeps; ++s) {
    const std::uint64_t in = region(s % 2), out = region((s + 1) % 2);
    auto at = [n](std::uint64_t base, std::size_t i, std::size_t j) {
      return base + kElem * (i * n + j);
    };
    for (std::size_t i = 1; i + 1 < n; ++i) {
      for (std::size_t j = 1; j + 1 < n; ++j) {
        e.load(16, r(1), r(10), at(in, i - 1, j));
        e.load(17, r(2), r(10), at(in, i + 1, j));
        e.load(18, r(3), r(10), at(in, i, j - 1));
        e.load(19, r(4), r(10), at(in, i, j + 1));
        e.load(20, r(5), r(10), at(in, i, j));
        e.op(21, OpClass::kFadd, r(6), r(1), r(2));
        e.op(22, OpClass::kFadd, r(7), r(3), r(4));
        e.op(23, OpClass::kFadd, r(6), r(6), r(7));
        e.op(24, OpClass::kFadd, r(6), r(6), r(5));
        e.op(25, OpClass::kFmul, r(6), r(6), r(20));
        e.store(26, r(6), r(10), at(out, i, j));
        e.latch(27, 10, j + 2 == n, 16);
      }
      e.latch(29, 11, i + 2 == n, 16);
    }
  }
}

std::string make_workload_id(WorkloadKind kind, const WorkloadParams& values) {
  std::ostringstream os;
  os << workload_name(kind);
  char sep = ':';
  for (const auto& [k, v] : values) {
    os << sep << k << '=' << v;
    sep = ',';
  }
  return os.str();
}

}  // namespace

std::string_view op_name(OpClass op) { return kOpNames.at(static_cast<std::size_t>(op)); }

std::optional<OpClass> parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kNumOpClasses; ++i)
    if (kOpNames[i] == name) return static_cast<OpClass>(i);
  return std::nullopt;
}

std::string check_record(const InstructionRecord& r) {
  if (static_cast<std::size_t>(r.op) >= kNumOpClasses) return "op class out of range";
  for (const Reg* reg : {&r.dst, &r.src1, &r.src2})
    if (reg->has_value() && **reg >= kNumRegs) return "register index >= 32";
  if (r.mem_addr.has_value() != is_memory(r.op)) return "mem_addr presence must match LOAD/STORE";
  if (r.branch_taken.has_value() != is_branch(r.op))
    return "branch_taken presence must match CBRANCH/JUMP";
  if (r.branch_target.has_value() && !is_branch(r.op)) return "branch_target on a non-branch";
  if (r.op == OpClass::kJump && !r.branch_taken.value_or(false)) return "JUMP must be taken";
  return {};
}

std::string_view workload_name(WorkloadKind kind) {
  return kWorkloadNames.at(static_cast<std::size_t>(kind));
}

WorkloadKind parse_workload(std::string_view name) {
  for (std::size_t i = 0; i < kWorkloadNames.size(); ++i)
    if (kWorkloadNames[i] == name) return static_cast<WorkloadKind>(i);
  fail(ErrorKind::kInvalidArgument, "unknown workload kind '" + std::string(name) + "'");
}

WorkloadParams default_params(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::kStream: return {{"len", 10000}, {"passes", 3}};
    case WorkloadKind::kPointerChase: return {{"nodes", 16384}, {"steps", 40000}};
    case WorkloadKind::kMatmulTiled: return {{"n", 32}, {"tile", 8}};
    case WorkloadKind::kBranchy:
      return {{"len", 22000}, {"p_taken", 0.5}, {"p_taken2", 0.95}, {"phase_len", 3000}};
    case WorkloadKind::kMixed: return {{"len", 50000}, {"phase_len", 2500}, {"fault_rate", 0.001}};
    case WorkloadKind::kStrideScan: return {{"len", 50000}, {"stride", 9}};
    case WorkloadKind::kReduce: return {{"len", 25000}, {"passes", 2}};
    case WorkloadKind::kStencil: return {{"n", 72}, {"sweeps", 3}};
  }
  fail(ErrorKind::kInvalidArgument, "bad workload kind");
}

Trace gen_workload(WorkloadKind kind, const WorkloadParams& params, std::uint64_t seed) {
  WorkloadParams given = params;
  // p_taken2 follows p_taken unless given explicitly.
  if (kind == WorkloadKind::kBranchy && given.count("p_taken") && !given.count("p_taken2"))
    given["p_taken2"] = given["p_taken"];
  const Params p(kind, given);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));
  Emitter e(code_base(kind));
  e.prologue();
  switch (kind) {
    case WorkloadKind::kStream: emit_stream(e, p); break;
    case WorkloadKind::kPointerChase: emit_pointer_chase(e, p, rng); break;
    case WorkloadKind::kMatmulTiled: {
      const std::size_t n = p.count("n", 1, 1024);
      const std::size_t tile = p.count("tile", 1, 1024);
      require(tile <= n && n % tile == 0, ErrorKind::kParameter,
              "matmul_tiled: tile must divide n (tile <= n)");
      emit_matmul(e, n, tile);
      break;
    }
    case WorkloadKind::kBranchy: emit_branchy(e, p, rng); break;
    case WorkloadKind::kMixed: emit_mixed(e, p, rng); break;
    case WorkloadKind::kStrideScan: emit_stride_scan(e, p); break;
    case WorkloadKind::kReduce: emit_reduce(e, p); break;
    case WorkloadKind::kStencil: emit_stencil(e, p); break;
  }
  e.epilogue();
  return Trace{make_workload_id(kind, p.values()), seed, e.take()};
}

Trace gen_matmul_naive(std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::kParameter, "matmul: n must be positive");
  const std::uint64_t a = region(0), b = region(1), c = region(2);
  Emitter e(code_base(WorkloadKind::kMatmulTiled));
  e.prologue();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      e.load(16, r(3), r(12), c + kElem * (i * n + j));
      for (std::size_t k = 0; k < n; ++k) {
        e.load(17, r(1), r(13), a + kElem * (i * n + k));
        e.load(18, r(2), r(14), b + kElem * (k * n + j));
        e.op(19, OpClass::kFmul, r(4), r(1), r(2));
        e.op(20, OpClass::kFadd, r(3), r(3), r(4));
        if (n > 1) e.latch(21, 15, k + 1 == n, 17);
      }
      e.store(23, r(3), r(12), c + kElem * (i * n + j));
      if (n > 1) e.latch(24, 16, j + 1 == n, 16);
    }
    if (n > 1) e.latch(26, 17, i + 1 == n, 16);
  }
  e.epilogue();
  WorkloadParams values = default_params(WorkloadKind::kMatmulTiled);
  values["n"] = static_cast<double>(n);
  values["tile"] = static_cast<double>(n);
  return Trace{make_workload_id(WorkloadKind::kMatmulTiled, values), seed, e.take()};
}

TraceStats trace_stats(const Trace& trace) {
  TraceStats s;
  std::unordered_set<std::uint64_t> addrs;
  for (const auto& rec : trace.records) {
    ++s.op_counts[static_cast<std::size_t>(rec.op)];
    ++s.total;
    if (rec.mem_addr) addrs.insert(*rec.mem_addr);
    if (is_branch(rec.op)) ++s.branch_count;
    if (rec.op == OpClass::kCbranch) {
      ++s.cbranch_count;
      if (rec.branch_taken.value_or(false)) ++s.taken_branches;
    }
    if (rec.faulted) ++s.faulted;
  }
  s.unique_data_addresses = addrs.size();
  return s;
}

}  // namespace perfvec::trace
