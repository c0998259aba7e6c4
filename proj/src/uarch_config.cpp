// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "perfvec/error.hpp"
#include "perfvec/rng.hpp"
#include "perfvec/uarch.hpp"

namespace perfvec::uarch {

using trace::OpClass;

namespace {

bool pow2(std::uint64_t v) { return v != 0 && std::has_single_bit(v); }

std::string check_cache(const CacheConfig& c, const char* name) {
  const std::string n(name);
  if (!c.present) return {};
  if (!pow2(c.sets)) return n + ".sets must be a power of two";
  if (c.ways < 1 || c.ways > 16) return n + ".ways must lie in 1..16";
  if (!pow2(c.line_bytes) || c.line_bytes < 16 || c.line_bytes > 128)
    return n + ".line_bytes must be a power of two in 16..128";
  if (c.hit_cycles < 1 || c.hit_cycles > 20) return n + ".hit_cycles must lie in 1..20";
  return {};
}

template <class T>
T pick(Rng& rng, std::initializer_list<T> options) {
  const auto i = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(options.size()) - 1));
  return *(options.begin() + i);
}

std::uint32_t urange(Rng& rng, std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint32_t>(rng.range(lo, hi));
}

CacheConfig make_cache(std::uint64_t capacity, std::uint32_t ways, std::uint32_t line,
                       std::uint32_t hit) {
  CacheConfig c;
  c.ways = ways;
  c.line_bytes = line;
  c.hit_cycles = hit;
  c.sets = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, capacity / (std::uint64_t{ways} * line)));
  return c;
}

void set_latency(OpLatencies& lat, OpClass op, std::uint32_t v) { lat[static_cast<std::size_t>(op)] = v; }

std::string hex_id(std::uint64_t seed) {
  std::ostringstream os;
  os << "s" << std::hex << (seed & 0xFFFFFFFFULL);
  return os.str();
}

}  // namespace

std::string check_config(const UarchConfig& c) {
  if (c.config_id.empty()) return "config_id must be non-empty";
  if (c.config_id.find_first_of(" \t\n/=#") != std::string::npos)
    return "config_id must not contain whitespace, '/', '=' or '#'";
  if (c.clock_ps == 0) return "clock_ps must be positive";
  if (c.fetch_width < 1 || c.fetch_width > 8) return "fetch_width must lie in 1..8";
  if (c.window_size < 1 || c.window_size > 256) return "window_size must lie in 1..256";
  if (c.core_kind == CoreKind::kInOrder && c.window_size != 1) return "InOrder requires window_size = 1";
  for (std::size_t i = 0; i < trace::kNumOpClasses; ++i) {
    if (static_cast<OpClass>(i) == OpClass::kNop) continue;
    if (c.op_latency[i] < 1)
      return "op_latency[" + std::string(trace::op_name(static_cast<OpClass>(i))) + "] must be >= 1";
  }
  if (!c.l1i.present || !c.l1d.present) return "L1I and L1D must be present";
  for (auto [cache, name] : {std::pair{&c.l1i, "l1i"}, {&c.l1d, "l1d"}, {&c.l2, "l2"}}) {
    std::string bad = check_cache(*cache, name);
    if (!bad.empty()) return bad;
  }
  if (c.mem_cycles < 1) return "mem_cycles must be positive";
  if (c.bp_index_bits < 4 || c.bp_index_bits > 16) return "bp_index_bits must lie in 4..16";
  if (c.bp_penalty_cycles < 1 || c.bp_penalty_cycles > 30) return "bp_penalty_cycles must lie in 1..30";
  return {};
}

UarchConfig sample_config_of_kind(std::uint64_t seed, CoreKind kind) {
  Rng rng(mix_seed(seed, 0x5A));
  UarchConfig c;
  c.core_kind = kind;
  c.config_id = (kind == CoreKind::kInOrder ? "io_" : "ooo_") + hex_id(seed);
  c.clock_ps = 250 + 50 * urange(rng, 0, 15);
  if (kind == CoreKind::kInOrder) {
    c.fetch_width = urange(rng, 1, 2);
    c.window_size = 1;
  } else {
    c.fetch_width = urange(rng, 1, 8);
    c.window_size = pick<std::uint32_t>(rng, {8, 16, 32, 64, 96, 128, 192, 256});
  }
  auto& lat = c.op_latency;
  set_latency(lat, OpClass::kIalu, urange(rng, 1, 2));
  set_latency(lat, OpClass::kImul, urange(rng, 2, 5));
  set_latency(lat, OpClass::kIdiv, urange(rng, 8, 30));
  set_latency(lat, OpClass::kFadd, urange(rng, 2, 6));
  set_latency(lat, OpClass::kFmul, urange(rng, 3, 7));
  set_latency(lat, OpClass::kFdiv, urange(rng, 8, 30));
  set_latency(lat, OpClass::kLoad, urange(rng, 1, 2));
  set_latency(lat, OpClass::kStore, urange(rng, 1, 2));
  set_latency(lat, OpClass::kCbranch, 1);
  set_latency(lat, OpClass::kJump, 1);
  set_latency(lat, OpClass::kNop, urange(rng, 0, 1));
  const std::uint32_t line = pick<std::uint32_t>(rng, {32, 64, 128});
  c.l1i = make_cache(1024ULL * pick<std::uint32_t>(rng, {8, 16, 32, 64}),
                     pick<std::uint32_t>(rng, {2, 4, 8}), line, urange(rng, 1, 3));
  c.l1d = make_cache(1024ULL * pick<std::uint32_t>(rng, {4, 8, 16, 32, 64, 128}),
                     pick<std::uint32_t>(rng, {2, 4, 8}), line, urange(rng, 1, 4));
  const bool has_l2 = rng.bernoulli(0.85);
  c.l2 = make_cache(1024ULL * pick<std::uint32_t>(rng, {128, 256, 512, 1024, 2048, 4096, 8192}),
                    pick<std::uint32_t>(rng, {4, 8, 16}), line, urange(rng, 6, 20));
  c.l2.present = has_l2;
  c.mem_cycles = urange(rng, 60, 300);
  c.bp_index_bits = urange(rng, 4, 16);
  c.bp_penalty_cycles = urange(rng, 3, 20);
  return c;
}

UarchConfig sample_config(std::uint64_t seed, double kind_bias) {
  require(kind_bias >= 0.0 && kind_bias <= 1.0, ErrorKind::kInvalidArgument,
          "kind_bias must lie in [0, 1]");
  Rng rng(mix_seed(seed, 0xB1A5));
  return sample_config_of_kind(seed, rng.bernoulli(kind_bias) ? CoreKind::kInOrder : CoreKind::kWindow);
}

std::vector<std::string> preset_names() { return {"inorder_little", "ooo_big"}; }

UarchConfig preset(const std::string& name) {
  UarchConfig c;
  auto& lat = c.op_latency;
  set_latency(lat, OpClass::kIalu, 1);
  set_latency(lat, OpClass::kImul, 3);
  set_latency(lat, OpClass::kIdiv, 12);
  set_latency(lat, OpClass::kFadd, 4);
  set_latency(lat, OpClass::kFmul, 5);
  set_latency(lat, OpClass::kFdiv, 15);
  set_latency(lat, OpClass::kLoad, 1);
  set_latency(lat, OpClass::kStore, 1);
  set_latency(lat, OpClass::kCbranch, 1);
  set_latency(lat, OpClass::kJump, 1);
  set_latency(lat, OpClass::kNop, 1);
  if (name == "inorder_little") {
    c.config_id = name;
    c.core_kind = CoreKind::kInOrder;
    c.clock_ps = 800;
    c.fetch_width = 2;
    c.window_size = 1;
    c.l1i = make_cache(32 * 1024, 2, 64, 1);
    c.l1d = make_cache(32 * 1024, 4, 64, 2);
    c.l2 = make_cache(512 * 1024, 8, 64, 10);
    c.mem_cycles = 120;
    c.bp_index_bits = 10;
    c.bp_penalty_cycles = 8;
    return c;
  }
  if (name == "ooo_big") {
    c.config_id = name;
    c.core_kind = CoreKind::kWindow;
    c.clock_ps = 300;
    c.fetch_width = 4;
    c.window_size = 192;
    c.l1i = make_cache(64 * 1024, 4, 64, 2);
    c.l1d = make_cache(64 * 1024, 8, 64, 3);
    c.l2 = make_cache(2048 * 1024, 16, 64, 14);
    c.mem_cycles = 250;
    c.bp_index_bits = 14;
    c.bp_penalty_cycles = 14;
    return c;
  }
  fail(ErrorKind::kInvalidArgument, "unknown preset '" + name + "'");
}

UarchConfig with_cache_sizes(const UarchConfig& base, std::uint32_t l1d_kb, std::uint32_t l2_kb) {
  UarchConfig c = base;
  c.l1d = make_cache(1024ULL * l1d_kb, base.l1d.ways, base.l1d.line_bytes, base.l1d.hit_cycles);
  c.l2 = make_cache(1024ULL * l2_kb, base.l2.ways, base.l2.line_bytes, base.l2.hit_cycles);
  c.l2.present = true;
  c.config_id = base.config_id + "_l1d" + std::to_string(l1d_kb) + "_l2" + std::to_string(l2_kb);
  const std::string bad = check_config(c);
  require(bad.empty(), ErrorKind::kParameter, "cache-size variant invalid: " + bad);
  return c;
}

const UarchConfig& ConfigSuite::get(const std::string& id) const {
  for (const auto& c : configs)
    if (c.config_id == id) return c;
  fail(ErrorKind::kInvalidArgument, "config '" + id + "' not in suite");
}

std::vector<UarchConfig> ConfigSuite::select(const std::vector<std::string>& ids) const {
  std::vector<UarchConfig> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(get(id));
  return out;
}

ConfigSuite default_suite(std::uint64_t seed, std::size_t n_random, std::size_t n_heldout,
                          double kind_bias) {
  require(n_heldout <= n_random, ErrorKind::kInvalidArgument, "more held-out configs than random ones");
  require(kind_bias >= 0.0 && kind_bias <= 1.0, ErrorKind::kInvalidArgument,
          "kind_bias must lie in [0, 1]");
  ConfigSuite suite;
  std::vector<UarchConfig> presets;
  for (const auto& name : preset_names()) presets.push_back(preset(name));
  const auto preset_inorder = static_cast<std::ptrdiff_t>(std::count_if(
      presets.begin(), presets.end(), [](const auto& c) { return c.core_kind == CoreKind::kInOrder; }));
  const auto total = static_cast<double>(n_random + presets.size());
  const std::ptrdiff_t want = static_cast<std::ptrdiff_t>(std::lround(kind_bias * total)) - preset_inorder;
  const auto n_inorder = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(want, 0, static_cast<std::ptrdiff_t>(n_random)));

  // InOrder samples are spread evenly over the training positions first.
  const std::size_t n_train_random = n_random - n_heldout;
  const std::size_t span = n_inorder <= n_train_random && n_train_random > 0 ? n_train_random : n_random;
  std::vector<UarchConfig> random;
  for (std::size_t i = 0; i < n_random; ++i) {
    const bool inorder =
        n_inorder > 0 && i < span && (i * n_inorder) / span != ((i + 1) * n_inorder) / span;
    random.push_back(sample_config_of_kind(mix_seed(seed, 1000 + i),
                                           inorder ? CoreKind::kInOrder : CoreKind::kWindow));
  }
  for (std::size_t i = 0; i < n_random; ++i) {
    suite.configs.push_back(random[i]);
    (i < n_train_random ? suite.train_ids : suite.heldout_ids).push_back(random[i].config_id);
  }
  for (auto& p : presets) {
    suite.train_ids.push_back(p.config_id);
    suite.configs.push_back(std::move(p));
  }
  return suite;
}

// --- text format ----------------------------------------------------------

namespace {

void write_cache(std::ostream& out, const char* name, const CacheConfig& c) {
  out << name << ".present = " << (c.present ? 1 : 0) << '\n';
  out << name << ".sets = " << c.sets << '\n';
  out << name << ".ways = " << c.ways << '\n';
  out << name << ".line_bytes = " << c.line_bytes << '\n';
  out << name << ".hit_cycles = " << c.hit_cycles << '\n';
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  std::uint32_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size(), ErrorKind::kFormat,
          "config key '" + key + "': expected unsigned integer, got '" + v + "'");
  return out;
}

}  // namespace

void write_config(std::ostream& out, const UarchConfig& c) {
  out << "# perfvec microarchitecture config\n";
  out << "config_id = " << c.config_id << '\n';
  out << "core_kind = " << (c.core_kind == CoreKind::kInOrder ? "inorder" : "window") << '\n';
  out << "clock_ps = " << c.clock_ps << '\n';
  out << "fetch_width = " << c.fetch_width << '\n';
  out << "window_size = " << c.window_size << '\n';
  for (std::size_t i = 0; i < trace::kNumOpClasses; ++i)
    out << "op_latency." << trace::op_name(static_cast<OpClass>(i)) << " = " << c.op_latency[i] << '\n';
  write_cache(out, "l1i", c.l1i);
  write_cache(out, "l1d", c.l1d);
  write_cache(out, "l2", c.l2);
  out << "mem_cycles = " << c.mem_cycles << '\n';
  out << "bp_index_bits = " << c.bp_index_bits << '\n';
  out << "bp_penalty_cycles = " << c.bp_penalty_cycles << '\n';
}

UarchConfig read_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::kFormat,
            "config line " + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::kFormat, "config missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&](const std::string& key) { return to_u32(key, take(key)); };
  auto cache = [&](const std::string& name) {
    CacheConfig c;
    c.present = num(name + ".present") != 0;
    c.sets = num(name + ".sets");
    c.ways = num(name + ".ways");
    c.line_bytes = num(name + ".line_bytes");
    c.hit_cycles = num(name + ".hit_cycles");
    return c;
  };
  UarchConfig c;
  c.config_id = take("config_id");
  const std::string kind = take("core_kind");
  require(kind == "inorder" || kind == "window", ErrorKind::kFormat,
          "core_kind must be 'inorder' or 'window'");
  c.core_kind = kind == "inorder" ? CoreKind::kInOrder : CoreKind::kWindow;
  c.clock_ps = num("clock_ps");
  c.fetch_width = num("fetch_width");
  c.window_size = num("window_size");
  for (std::size_t i = 0; i < trace::kNumOpClasses; ++i)
    c.op_latency[i] = num("op_latency." + std::string(trace::op_name(static_cast<OpClass>(i))));
  c.l1i = cache("l1i");
  c.l1d = cache("l1d");
  c.l2 = cache("l2");
  c.mem_cycles = num("mem_cycles");
  c.bp_index_bits = num("bp_index_bits");
  c.bp_penalty_cycles = num("bp_penalty_cycles");
  require(kv.empty(), ErrorKind::kFormat, "unknown config key '" + (kv.empty() ? "" : kv.begin()->first) + "'");
  const std::string bad = check_config(c);
  require(bad.empty(), ErrorKind::kParameter, "invalid config '" + c.config_id + "': " + bad);
  return c;
}

void write_config(const std::filesystem::path& path, const UarchConfig& c) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kNotFound, "cannot open " + path.string() + " for writing");
  write_config(out, c);
}

UarchConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kNotFound, "cannot open " + path.string());
  return read_config(in);
}

void write_suite(const std::filesystem::path& dir, const ConfigSuite& suite) {
  std::filesystem::create_directories(dir);
  for (const auto& c : suite.configs) write_config(dir / (c.config_id + ".cfg"), c);
  std::ofstream out(dir / "suite.manifest");
  require(static_cast<bool>(out), ErrorKind::kNotFound, "cannot write suite manifest in " + dir.string());
  out << "# role config_id\n";
  for (const auto& id : suite.train_ids) out << "train " << id << '\n';
  for (const auto& id : suite.heldout_ids) out << "heldout " << id << '\n';
}

ConfigSuite read_suite(const std::filesystem::path& dir) {
  std::ifstream in(dir / "suite.manifest");
  require(static_cast<bool>(in), ErrorKind::kNotFound, "missing " + (dir / "suite.manifest").string());
  ConfigSuite suite;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    std::string role, id;
    ls >> role >> id;
    require(!id.empty() && (role == "train" || role == "heldout"), ErrorKind::kFormat,
            "bad manifest line '" + t + "'");
    suite.configs.push_back(read_config(dir / (id + ".cfg")));
    require(suite.configs.back().config_id == id, ErrorKind::kFormat,
            "config file " + id + ".cfg declares a different config_id");
    (role == "train" ? suite.train_ids : suite.heldout_ids).push_back(id);
  }
  return suite;
}

}  // namespace perfvec::uarch
