// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <vector>

#include "perfvec/byteio.hpp"
#include "perfvec/trace.hpp"

namespace perfvec::trace {

namespace {

enum Flag : std::uint8_t {
  kTaken = 1 << 0,
  kHasMem = 1 << 1,
  kHasBranch = 1 << 2,
  kFaulted = 1 << 3,
  kHasDst = 1 << 4,
  kHasSrc1 = 1 << 5,
  kHasSrc2 = 1 << 6,
};

void encode(const InstructionRecord& r, unsigned char* p) {
  using byteio::store_le;
  std::uint8_t flags = 0;
  if (r.branch_taken.value_or(false)) flags |= kTaken;
  if (r.mem_addr) flags |= kHasMem;
  if (r.branch_taken) flags |= kHasBranch;
  if (r.faulted) flags |= kFaulted;
  if (r.dst) flags |= kHasDst;
  if (r.src1) flags |= kHasSrc1;
  if (r.src2) flags |= kHasSrc2;
  store_le<std::uint64_t>(p, r.pc);
  store_le<std::uint64_t>(p + 8, r.mem_addr.value_or(0));
  store_le<std::uint64_t>(p + 16, r.branch_target.value_or(0));
  p[24] = static_cast<std::uint8_t>(r.op);
  p[25] = r.dst.value_or(0);
  p[26] = r.src1.value_or(0);
  p[27] = r.src2.value_or(0);
  p[28] = flags;
  p[29] = p[30] = p[31] = 0;
  store_le<std::uint32_t>(p + 32, 0);
  store_le<std::uint32_t>(p + 36, 0);
}

InstructionRecord decode(const unsigned char* p, std::size_t index) {
  using byteio::load_le;
  InstructionRecord r;
  r.pc = load_le<std::uint64_t>(p);
  const std::uint8_t op = p[24];
  require(op < kNumOpClasses, ErrorKind::kFormat,
          "record " + std::to_string(index) + ": op class out of range");
  r.op = static_cast<OpClass>(op);
  const std::uint8_t flags = p[28];
  if (flags & kHasMem) r.mem_addr = load_le<std::uint64_t>(p + 8);
  if (flags & kHasBranch) {
    r.branch_taken = (flags & kTaken) != 0;
    r.branch_target = load_le<std::uint64_t>(p + 16);
  }
  if (flags & kHasDst) r.dst = p[25];
  if (flags & kHasSrc1) r.src1 = p[26];
  if (flags & kHasSrc2) r.src2 = p[27];
  r.faulted = (flags & kFaulted) != 0;
  const std::string bad = check_record(r);
  if (!bad.empty()) fail(ErrorKind::kFormat, "record " + std::to_string(index) + ": " + bad);
  return r;
}

}  // namespace

void write_trace(std::ostream& out, const Trace& trace) {
  out.write("PVTR", 4);
  byteio::put_le<std::uint32_t>(out, kTraceFormatVersion);
  byteio::put_le<std::uint64_t>(out, trace.records.size());
  std::vector<unsigned char> buf(kTraceRecordBytes * 4096);
  std::size_t fill = 0;
  for (const auto& rec : trace.records) {
    encode(rec, buf.data() + fill);
    fill += kTraceRecordBytes;
    if (fill == buf.size()) {
      byteio::put_bytes(out, buf.data(), fill);
      fill = 0;
    }
  }
  byteio::put_bytes(out, buf.data(), fill);
  require(static_cast<bool>(out), ErrorKind::kFormat, "failed writing trace");
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kNotFound, "cannot open " + path.string() + " for writing");
  write_trace(out, trace);
}

Trace read_trace(std::istream& in, std::string workload_id) {
  byteio::check_magic(in, "PVTR", "PVTR trace");
  const auto version = byteio::get_le<std::uint32_t>(in, "PVTR version");
  require(version == kTraceFormatVersion, ErrorKind::kFormat,
          "unsupported PVTR version " + std::to_string(version));
  const auto count = byteio::get_le<std::uint64_t>(in, "PVTR record count");
  Trace t;
  t.workload_id = std::move(workload_id);
  t.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 26)));
  std::vector<unsigned char> buf(kTraceRecordBytes * 4096);
  std::uint64_t done = 0;
  while (done < count) {
    const std::size_t chunk = static_cast<std::size_t>(std::min<std::uint64_t>(count - done, 4096));
    byteio::get_bytes(in, buf.data(), chunk * kTraceRecordBytes, "PVTR records");
    for (std::size_t i = 0; i < chunk; ++i)
      t.records.push_back(decode(buf.data() + i * kTraceRecordBytes, static_cast<std::size_t>(done + i)));
    done += chunk;
  }
  return t;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kNotFound, "cannot open " + path.string());
  return read_trace(in, path.stem().string());
}

}  // namespace perfvec::trace
