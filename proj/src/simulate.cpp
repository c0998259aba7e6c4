// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <bit>

#include "perfvec/error.hpp"
#include "perfvec/uarch.hpp"

namespace perfvec::uarch {

using trace::OpClass;

namespace {

// Set-associative cache with true LRU; each set is a recency-ordered list of
// line addresses (front = MRU).
class Cache {
 public:
  explicit Cache(const CacheConfig& c)
      : sets_(c.sets), ways_(c.ways), line_shift_(std::countr_zero(c.line_bytes)),
        line_bytes_(c.line_bytes), tags_(std::size_t{c.sets} * c.ways, kInvalid),
        fill_(c.sets, 0) {}

  std::uint64_t line_of(std::uint64_t addr) const { return addr >> line_shift_; }
  std::uint32_t line_bytes() const { return line_bytes_; }

  struct Result {
    bool hit;
    bool evicted;
    std::uint64_t victim_line;
  };

  Result access(std::uint64_t line) {
    std::uint64_t* set = set_ptr(line);
    std::uint32_t& fill = fill_[line & (sets_ - 1)];
    for (std::uint32_t w = 0; w < fill; ++w) {
      if (set[w] == line) {
        std::rotate(set, set + w, set + w + 1);
        return {true, false, 0};
      }
    }
    Result r{false, false, 0};
    if (fill == ways_) {
      r.evicted = true;
      r.victim_line = set[ways_ - 1];
    } else {
      ++fill;
    }
    std::copy_backward(set, set + fill - 1, set + fill);
    set[0] = line;
    return r;
  }

  void invalidate(std::uint64_t line) {
    std::uint64_t* set = set_ptr(line);
    std::uint32_t& fill = fill_[line & (sets_ - 1)];
    for (std::uint32_t w = 0; w < fill; ++w) {
      if (set[w] == line) {
        std::copy(set + w + 1, set + fill, set + w);
        --fill;
        set[fill] = kInvalid;
        return;
      }
    }
  }

 private:
  static constexpr std::uint64_t kInvalid = ~0ULL;

  std::uint64_t* set_ptr(std::uint64_t line) { return tags_.data() + (line & (sets_ - 1)) * ways_; }

  std::uint64_t sets_;
  std::uint32_t ways_;
  int line_shift_;
  std::uint32_t line_bytes_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint32_t> fill_;
};

class Hierarchy {
 public:
  explicit Hierarchy(const UarchConfig& c)
      : cfg_(c), l1i_(c.l1i), l1d_(c.l1d), l2_(c.l2.present ? c.l2 : CacheConfig{1, 1, 64, 1, true}) {}

  std::uint32_t fetch(std::uint64_t addr, SimStats& st) {
    ++st.l1i_accesses;
    if (l1i_.access(l1i_.line_of(addr)).hit) return cfg_.l1i.hit_cycles;
    ++st.l1i_misses;
    return cfg_.l1i.hit_cycles + lower(addr, st);
  }

  std::uint32_t data(std::uint64_t addr, SimStats& st) {
    ++st.l1d_accesses;
    if (l1d_.access(l1d_.line_of(addr)).hit) return cfg_.l1d.hit_cycles;
    ++st.l1d_misses;
    return cfg_.l1d.hit_cycles + lower(addr, st);
  }

 private:
  std::uint32_t lower(std::uint64_t addr, SimStats& st) {
    if (!cfg_.l2.present) return cfg_.mem_cycles;
    ++st.l2_accesses;
    const auto r = l2_.access(l2_.line_of(addr));
    if (r.evicted) back_invalidate(r.victim_line);
    if (r.hit) return cfg_.l2.hit_cycles;
    ++st.l2_misses;
    return cfg_.l2.hit_cycles + cfg_.mem_cycles;
  }

  // Inclusion: an L2 victim leaves both L1s.
  void back_invalidate(std::uint64_t l2_line) {
    const std::uint64_t base = l2_line * l2_.line_bytes();
    for (Cache* l1 : {&l1i_, &l1d_}) {
      const std::uint32_t step = l1->line_bytes();
      for (std::uint64_t a = base; a < base + l2_.line_bytes(); a += step) l1->invalidate(l1->line_of(a));
    }
  }

  const UarchConfig& cfg_;
  Cache l1i_, l1d_, l2_;
};

}  // namespace

SimResult simulate_detailed(const trace::Trace& trace, const UarchConfig& config,
                            const SimOptions& options) {
  const std::string bad = check_config(config);
  require(bad.empty(), ErrorKind::kParameter, "invalid config '" + config.config_id + "': " + bad);
  const std::size_t n = trace.size();
  SimResult out;
  out.retire.retire_cycle.resize(n);
  auto& retire = out.retire.retire_cycle;
  SimStats& st = out.stats;

  Hierarchy mem(config);
  std::vector<std::uint8_t> counters(std::size_t{1} << config.bp_index_bits, 2);
  const std::uint64_t bp_mask = counters.size() - 1;

  const std::size_t width = config.fetch_width;
  const std::size_t window = config.core_kind == CoreKind::kInOrder ? 1 : config.window_size;
  std::vector<std::uint64_t> fetch_start_ring(width, 0);
  std::array<std::uint64_t, trace::kNumRegs> reg_ready{};

  std::uint64_t prev_start = 0, prev_fc = 0, prev_retire = 0, redirect = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = trace.records[i];

    std::uint64_t start = std::max(prev_start, redirect);
    if (i >= width) start = std::max(start, fetch_start_ring[i % width] + 1);
    fetch_start_ring[i % width] = start;
    prev_start = start;
    const std::uint32_t ilat = options.ideal_icache ? config.l1i.hit_cycles : mem.fetch(rec.pc, st);
    const std::uint64_t fc = std::max(prev_fc, start + ilat);
    prev_fc = fc;

    std::uint64_t begin = fc;
    if (rec.src1) begin = std::max(begin, reg_ready[*rec.src1]);
    if (rec.src2) begin = std::max(begin, reg_ready[*rec.src2]);
    if (i >= window) begin = std::max(begin, retire[i - window]);

    std::uint64_t done = begin + config.latency(rec.op);
    if (rec.mem_addr) done += mem.data(*rec.mem_addr, st);
    if (rec.dst) reg_ready[*rec.dst] = done;

    bool flush = rec.faulted;
    if (rec.op == OpClass::kCbranch) {
      ++st.cbranches;
      std::uint8_t& ctr = counters[(rec.pc >> 2) & bp_mask];
      const bool taken = rec.branch_taken.value_or(false);
      if ((ctr >= 2) != taken) {
        ++st.mispredicts;
        flush = true;
      }
      if (taken && ctr < 3) ++ctr;
      if (!taken && ctr > 0) --ctr;
    }
    redirect = flush ? done + config.bp_penalty_cycles : 0;

    prev_retire = std::max(prev_retire, done);
    retire[i] = prev_retire;
  }
  return out;
}

RetireTimes simulate(const trace::Trace& trace, const UarchConfig& config, const SimOptions& options) {
  return simulate_detailed(trace, config, options).retire;
}

std::vector<std::uint64_t> incremental_latencies(const RetireTimes& rt) {
  std::vector<std::uint64_t> t(rt.size());
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < rt.size(); ++i) {
    const std::uint64_t cur = rt.retire_cycle[i];
    if (cur < prev) fail(ErrorKind::kPrecondition, "retire times decrease at index " + std::to_string(i));
    t[i] = cur - prev;
    prev = cur;
  }
  return t;
}

std::uint64_t total_time_ps(const RetireTimes& rt, const UarchConfig& config) {
  return rt.last() * config.clock_ps;
}

}  // namespace perfvec::uarch
