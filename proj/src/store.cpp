// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/store.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "perfvec/byteio.hpp"
#include "perfvec/error.hpp"
#include "perfvec/rng.hpp"

namespace perfvec::store {

using namespace byteio;

namespace {

void put_string32(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

std::string get_string32(std::istream& in, const char* what) {
  const auto len = get_le<std::uint32_t>(in, what);
  require(len < (1u << 20), ErrorKind::kFormat, std::string("implausible string length in ") + what);
  std::string s(len, '\0');
  get_bytes(in, s.data(), len, what);
  return s;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kNotFound, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kNotFound, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

std::size_t Dataset::workload_of(std::size_t i) const {
  require(i < n(), ErrorKind::kInvalidArgument, "dataset index out of range");
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), i);
  return static_cast<std::size_t>(it - offsets.begin()) - 1;
}

std::size_t Dataset::config_index(const std::string& id) const {
  const auto it = std::find(config_ids.begin(), config_ids.end(), id);
  require(it != config_ids.end(), ErrorKind::kNotFound, "config '" + id + "' not in dataset");
  return static_cast<std::size_t>(it - config_ids.begin());
}

std::vector<float> latency_targets(const trace::Trace& trace, const uarch::UarchConfig& config) {
  const auto inc = uarch::incremental_latencies(uarch::simulate(trace, config));
  std::vector<float> out(inc.size());
  for (std::size_t i = 0; i < inc.size(); ++i)
    out[i] = static_cast<float>(uarch::cycles_to_target(inc[i], config.clock_ps));
  return out;
}

Dataset assemble_dataset(const std::vector<std::string>& workload_ids,
                         const std::vector<features::FeatureMatrix>& feats,
                         const std::vector<std::string>& config_ids,
                         const std::vector<std::vector<std::vector<float>>>& targets,
                         std::uint32_t context) {
  require(feats.size() == workload_ids.size() && targets.size() == workload_ids.size(),
          ErrorKind::kData, "workload, feature and target lists differ in length");
  Dataset ds;
  ds.K = static_cast<std::uint32_t>(config_ids.size());
  ds.C = context;
  ds.config_ids = config_ids;
  ds.workload_ids = workload_ids;
  ds.offsets.push_back(0);
  for (const auto& f : feats) ds.offsets.push_back(ds.offsets.back() + f.rows);
  const std::size_t n = ds.n();
  ds.features.reserve(n * ds.F);
  ds.targets.resize(n * ds.K);
  for (std::size_t w = 0; w < feats.size(); ++w) {
    ds.features.insert(ds.features.end(), feats[w].data.begin(), feats[w].data.end());
    require(targets[w].size() == ds.K, ErrorKind::kData,
            "workload '" + workload_ids[w] + "' is missing target columns");
    for (std::size_t j = 0; j < ds.K; ++j) {
      require(targets[w][j].size() == feats[w].rows, ErrorKind::kData,
              "partial target rows for workload '" + workload_ids[w] + "'");
      for (std::size_t i = 0; i < feats[w].rows; ++i)
        ds.targets[(ds.offsets[w] + i) * ds.K + j] = targets[w][j][i];
    }
  }
  return ds;
}

Dataset build_dataset(const std::vector<trace::Trace>& traces,
                      const std::vector<uarch::UarchConfig>& configs, std::uint32_t context,
                      unsigned jobs) {
  require(!configs.empty(), ErrorKind::kData, "no configs to simulate");
  const std::size_t W = traces.size(), K = configs.size();
  std::vector<features::FeatureMatrix> feats(W);
  std::vector<std::vector<std::vector<float>>> targets(W, std::vector<std::vector<float>>(K));
  // Work items: W feature extractions then W*K simulations.
  const std::size_t items = W + W * K;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t it; (it = next.fetch_add(1)) < items;) {
      try {
        if (it < W) {
          feats[it] = features::extract_features(traces[it]);
        } else {
          const std::size_t w = (it - W) / K, j = (it - W) % K;
          targets[w][j] = latency_targets(traces[w], configs[j]);
        }
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(items)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<std::string> wids, cids;
  for (const auto& t : traces) wids.push_back(t.workload_id);
  for (const auto& c : configs) cids.push_back(c.config_id);
  return assemble_dataset(wids, feats, cids, targets, context);
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  require(ds.features.size() == ds.n() * ds.F && ds.targets.size() == ds.n() * ds.K,
          ErrorKind::kData, "dataset arrays do not match header sizes");
  out.write("PVDS", 4);
  put_le<std::uint32_t>(out, kDatasetVersion);
  put_le<std::uint64_t>(out, ds.n());
  put_le<std::uint32_t>(out, ds.F);
  put_le<std::uint32_t>(out, ds.K);
  put_le<std::uint32_t>(out, ds.C);
  for (const auto& id : ds.config_ids) put_string32(out, id);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.workloads()));
  for (std::size_t w = 0; w < ds.workloads(); ++w) {
    put_le<std::uint64_t>(out, ds.offsets[w]);
    put_string32(out, ds.workload_ids[w]);
  }
  const std::size_t row = (ds.F + ds.K) * 4;
  std::vector<unsigned char> buf(row * 4096);
  for (std::size_t i0 = 0; i0 < ds.n(); i0 += 4096) {
    const std::size_t cnt = std::min<std::size_t>(4096, ds.n() - i0);
    unsigned char* p = buf.data();
    for (std::size_t i = i0; i < i0 + cnt; ++i) {
      for (std::size_t f = 0; f < ds.F; ++f, p += 4)
        store_le(p, std::bit_cast<std::uint32_t>(ds.features[i * ds.F + f]));
      for (std::size_t k = 0; k < ds.K; ++k, p += 4)
        store_le(p, std::bit_cast<std::uint32_t>(ds.targets[i * ds.K + k]));
    }
    put_bytes(out, buf.data(), cnt * row);
  }
  require(out.good(), ErrorKind::kFormat, "write failed");
}

Dataset read_dataset(std::istream& in) {
  check_magic(in, "PVDS", "PVDS dataset");
  const auto version = get_le<std::uint32_t>(in, "PVDS version");
  require(version == kDatasetVersion, ErrorKind::kFormat,
          "unsupported PVDS version " + std::to_string(version));
  Dataset ds;
  const auto n = get_le<std::uint64_t>(in, "PVDS n");
  ds.F = get_le<std::uint32_t>(in, "PVDS F");
  ds.K = get_le<std::uint32_t>(in, "PVDS K");
  ds.C = get_le<std::uint32_t>(in, "PVDS C");
  require(ds.F == features::kNumFeatures, ErrorKind::kFormat,
          "PVDS feature width " + std::to_string(ds.F) + " is not supported");
  require(ds.K >= 1 && ds.K < 4096, ErrorKind::kFormat, "implausible PVDS config count");
  for (std::uint32_t j = 0; j < ds.K; ++j) ds.config_ids.push_back(get_string32(in, "config id"));
  const auto W = get_le<std::uint32_t>(in, "PVDS workload count");
  for (std::uint32_t w = 0; w < W; ++w) {
    ds.offsets.push_back(get_le<std::uint64_t>(in, "workload offset"));
    ds.workload_ids.push_back(get_string32(in, "workload id"));
  }
  ds.offsets.push_back(n);
  require(W == 0 ? n == 0 : ds.offsets.front() == 0, ErrorKind::kFormat, "bad PVDS workload index");
  require(std::is_sorted(ds.offsets.begin(), ds.offsets.end()), ErrorKind::kFormat,
          "PVDS workload offsets are not sorted");
  const std::size_t row = (ds.F + ds.K) * 4;
  ds.features.resize(n * ds.F);
  ds.targets.resize(n * ds.K);
  std::vector<unsigned char> buf(row * 4096);
  for (std::size_t i0 = 0; i0 < n; i0 += 4096) {
    const std::size_t cnt = std::min<std::size_t>(4096, n - i0);
    get_bytes(in, buf.data(), cnt * row, "PVDS body");
    const unsigned char* p = buf.data();
    for (std::size_t i = i0; i < i0 + cnt; ++i) {
      for (std::size_t f = 0; f < ds.F; ++f, p += 4)
        ds.features[i * ds.F + f] = std::bit_cast<float>(load_le<std::uint32_t>(p));
      for (std::size_t k = 0; k < ds.K; ++k, p += 4)
        ds.targets[i * ds.K + k] = std::bit_cast<float>(load_le<std::uint32_t>(p));
    }
  }
  char extra;
  require(!in.read(&extra, 1), ErrorKind::kFormat, "trailing bytes after PVDS body");
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  auto out = open_out(path);
  write_dataset(out, ds);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

void fill_window(const float* trace_rows, std::size_t F, std::size_t pos, std::size_t c,
                 double* out) {
  const std::size_t T = c + 1;
  const std::size_t pad = pos < c ? c - pos : 0;
  std::fill(out, out + pad * F, 0.0);
  const float* src = trace_rows + (pos + pad - c) * F;
  for (std::size_t k = pad * F; k < T * F; ++k) out[k] = *src++;
}

WindowBatch read_windows(const Dataset& ds, std::span<const std::size_t> indices, std::size_t c) {
  WindowBatch b;
  b.B = indices.size();
  b.T = c + 1;
  b.F = ds.F;
  b.K = ds.K;
  b.x.resize(b.B * b.T * b.F);
  b.t.resize(b.B * b.K);
  for (std::size_t s = 0; s < b.B; ++s) {
    const std::size_t i = indices[s];
    const std::size_t w = ds.workload_of(i);
    const std::size_t start = ds.offsets[w];
    fill_window(ds.feature_row(start), ds.F, i - start, c, b.x.data() + s * b.T * b.F);
    for (std::size_t k = 0; k < b.K; ++k) b.t[s * b.K + k] = ds.target_row(i)[k];
  }
  return b;
}

Split split(const std::vector<std::uint64_t>& offsets, const SplitSpec& spec) {
  require(spec.train >= 0 && spec.val >= 0 && spec.test >= 0 &&
              std::abs(spec.train + spec.val + spec.test - 1.0) <= 1e-9,
          ErrorKind::kInvalidArgument, "split fractions must be non-negative and sum to 1");
  require(spec.block >= 1, ErrorKind::kInvalidArgument, "split block length must be positive");
  struct Block {
    std::size_t begin, end;
  };
  std::vector<Block> blocks;
  for (std::size_t w = 0; w + 1 < offsets.size(); ++w)
    for (std::size_t b = offsets[w]; b < offsets[w + 1]; b += spec.block)
      blocks.push_back({b, std::min<std::size_t>(b + spec.block, offsets[w + 1])});
  Rng rng(mix_seed(spec.seed, 0x5717));
  for (std::size_t i = blocks.size(); i > 1; --i)
    std::swap(blocks[i - 1], blocks[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);
  const std::size_t n = offsets.empty() ? 0 : offsets.back();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * n));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * n)));
  Split out;
  std::size_t assigned = 0;
  for (const auto& b : blocks)
    for (std::size_t i = b.begin; i < b.end; ++i, ++assigned)
      (assigned < n_train ? out.train : assigned < n_train + n_val ? out.val : out.test).push_back(i);
  return out;
}

Split split(const Dataset& ds, const SplitSpec& spec) { return split(ds.offsets, spec); }

// --- checkpoint -----------------------------------------------------------

namespace {

bool is_text_section(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, ".json") == 0;
}

void put_section_header(std::ostream& out, const std::string& name,
                        const std::vector<std::uint64_t>& dims) {
  require(name.size() < 65536, ErrorKind::kInvalidArgument, "section name too long");
  require(dims.size() < 256, ErrorKind::kShape, "tensor rank too large");
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  put_bytes(out, name.data(), name.size());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(out, d);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write("PVCK", 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  // One name-ordered sequence over both maps keeps the bytes canonical.
  auto t = ck.tensors.begin();
  auto x = ck.text.begin();
  while (t != ck.tensors.end() || x != ck.text.end()) {
    if (x == ck.text.end() || (t != ck.tensors.end() && t->first < x->first)) {
      const auto& [name, tensor] = *t++;
      require(!is_text_section(name), ErrorKind::kInvalidArgument,
              "tensor name '" + name + "' uses the text suffix");
      const std::uint64_t count = std::accumulate(tensor.dims.begin(), tensor.dims.end(),
                                                  std::uint64_t{1}, std::multiplies<>());
      require(count == tensor.data.size(), ErrorKind::kShape,
              "tensor '" + name + "' dims do not match its data");
      put_section_header(out, name, tensor.dims);
      std::vector<unsigned char> buf(tensor.data.size() * 8);
      for (std::size_t i = 0; i < tensor.data.size(); ++i)
        store_le(buf.data() + 8 * i, std::bit_cast<std::uint64_t>(tensor.data[i]));
      put_bytes(out, buf.data(), buf.size());
    } else {
      const auto& [name, body] = *x++;
      require(is_text_section(name), ErrorKind::kInvalidArgument,
              "text section '" + name + "' must end in .json");
      put_section_header(out, name, {body.size()});
      put_bytes(out, body.data(), body.size());
    }
  }
  require(out.good(), ErrorKind::kFormat, "write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  check_magic(in, "PVCK", "PVCK checkpoint");
  const auto version = get_le<std::uint32_t>(in, "PVCK version");
  require(version == kCheckpointVersion, ErrorKind::kFormat,
          "unsupported PVCK version " + std::to_string(version));
  Checkpoint ck;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_le<std::uint16_t>(in, "section name length");
    std::string name(len, '\0');
    get_bytes(in, name.data(), len, "section name");
    const auto rank = get_le<std::uint8_t>(in, "section rank");
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t count = 1;
    for (auto& d : dims) {
      d = get_le<std::uint64_t>(in, "section dims");
      require(d < (1ULL << 34), ErrorKind::kFormat, "implausible dimension in '" + name + "'");
      count *= d;
    }
    require(count < (1ULL << 32), ErrorKind::kFormat, "section '" + name + "' is too large");
    if (is_text_section(name)) {
      require(rank == 1, ErrorKind::kFormat, "text section '" + name + "' must have rank 1");
      std::string body(count, '\0');
      get_bytes(in, body.data(), count, "text section");
      ck.text[name] = std::move(body);
    } else {
      Tensor t;
      t.dims = dims;
      std::vector<unsigned char> buf(count * 8);
      get_bytes(in, buf.data(), buf.size(), "tensor payload");
      t.data.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        t.data[i] = std::bit_cast<double>(load_le<std::uint64_t>(buf.data() + 8 * i));
      ck.tensors[name] = std::move(t);
    }
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  auto out = open_out(path);
  write_checkpoint(out, ck);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

}  // namespace perfvec::store
