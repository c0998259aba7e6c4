// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0
//
// perfvec <command> [flags]. Every command that writes files also writes
// <output>.manifest.json next to its main output.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "perfvec/compose.hpp"
#include "perfvec/dse.hpp"
#include "perfvec/error.hpp"
#include "perfvec/features.hpp"
#include "perfvec/model.hpp"
#include "perfvec/rng.hpp"
#include "perfvec/simd.hpp"
#include "perfvec/store.hpp"
#include "perfvec/trace.hpp"
#include "perfvec/uarch.hpp"

#ifndef PERFVEC_GIT_DESCRIBE
#define PERFVEC_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace perfvec;

namespace perfvec::cli {
int run_selftest(std::ostream& out, std::uint64_t seed);
}

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::string manifest;  // overrides the default manifest path
};

void add_common(CLI::App* sub, Common& c, bool random = true) {
  if (random)
    sub->add_option("--seed", c.seed, "Random seed (default: $PERFVEC_SEED or 1)")
        ->envname("PERFVEC_SEED")
        ->capture_default_str();
  sub->add_option("--jobs", c.jobs, "Worker threads; 1 is the reference path")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Manifest path (default: <output>.manifest.json)");
}

// --- manifest -------------------------------------------------------------

json option_values(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    if (o->get_lnames().empty()) continue;
    const std::string name = o->get_lnames().front();
    if (name == "help" || name == "manifest") continue;
    if (o->get_type_size() == 0) {
      cfg[name] = o->count() > 0;
    } else if (o->count() == 0) {
      cfg[name] = o->get_default_str();
    } else if (o->get_expected_max() > 1 || o->results().size() > 1) {
      cfg[name] = o->results();
    } else {
      cfg[name] = o->results().front();
    }
  }
  return cfg;
}

struct Run {
  const CLI::App* sub = nullptr;
  const Common* common = nullptr;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::time_t started = std::time(nullptr);
  std::vector<std::string> inputs, outputs;
  json extra = json::object();

  void write_manifest(const fs::path& main_output) const {
    fs::path path = common->manifest.empty() ? fs::path(main_output.string() + ".manifest.json")
                                             : fs::path(common->manifest);
    json m;
    m["command"] = sub->get_name();
    m["config"] = option_values(sub);
    m["seeds"] = {{"seed", common->seed}};
    m["jobs"] = common->jobs;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["versions"] = {{"perfvec", kVersion},
                     {"trace_format", trace::kTraceFormatVersion},
                     {"dataset_format", store::kDatasetVersion},
                     {"checkpoint_format", store::kCheckpointVersion},
                     {"simd", std::string(simd::isa_name(simd::active_isa()))}};
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&started), "%Y-%m-%dT%H:%M:%SZ");
    m["started"] = ts.str();
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m["git_describe"] = PERFVEC_GIT_DESCRIBE;
    if (!extra.empty()) m["results"] = extra;
    std::ofstream out(path);
    require(out.good(), ErrorKind::kNotFound, "cannot write '" + path.string() + "'");
    out << m.dump(2) << "\n";
  }
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(out.good(), ErrorKind::kNotFound, "cannot write '" + p.string() + "'");
  return out;
}

void require_file(const std::string& p) {
  require(fs::exists(p), ErrorKind::kNotFound, "no such file: '" + p + "'");
}

// A .cfg path, or a preset name.
uarch::UarchConfig resolve_config(const std::string& spec) {
  if (fs::exists(spec)) return uarch::read_config(fs::path(spec));
  const auto names = uarch::preset_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return uarch::preset(spec);
  fail(ErrorKind::kNotFound, "'" + spec + "' is neither a config file nor a preset");
}

trace::Trace load_trace(const std::string& p) {
  require_file(p);
  return trace::read_trace(fs::path(p));
}

struct Model {
  store::Checkpoint ck;
  model::Encoder enc;
  model::UarchTable table;
  features::FeatureMask mask;
};

Model load_model(const std::string& p) {
  require_file(p);
  Model m;
  m.ck = store::read_checkpoint(fs::path(p));
  m.enc = model::encoder_from(m.ck);
  m.table = model::table_from(m.ck);
  m.mask = model::mask_from(m.ck);
  return m;
}

std::span<const double> table_row(const Model& m, const std::string& id) {
  const auto& ids = m.table.ids;
  require(std::find(ids.begin(), ids.end(), id) != ids.end(), ErrorKind::kNotFound,
          "config '" + id + "' has no embedding in the model; run finetune first");
  return m.table.row(id);
}

std::string fmt(double v) { return compose::format_double(v); }

// --- commands -------------------------------------------------------------

struct GenArgs {
  std::string workload, out;
  std::vector<std::string> params;
};

void cmd_gen(const GenArgs& a, Run& run) {
  const auto kind = trace::parse_workload(a.workload);
  trace::WorkloadParams p;
  for (const auto& kv : a.params) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::kInvalidArgument,
            "--param expects key=value, got '" + kv + "'");
    char* end = nullptr;
    const std::string v = kv.substr(eq + 1);
    const double x = std::strtod(v.c_str(), &end);
    require(!v.empty() && *end == '\0', ErrorKind::kInvalidArgument, "bad number in --param '" + kv + "'");
    p[kv.substr(0, eq)] = x;
  }
  const auto t = trace::gen_workload(kind, p, run.common->seed);
  auto out = open_out(a.out);
  trace::write_trace(out, t);
  out.close();
  std::cout << t.workload_id << " " << t.size() << " instructions\n";
  run.outputs = {a.out};
  run.extra = {{"workload_id", t.workload_id}, {"instructions", t.size()}};
  run.write_manifest(a.out);
}

struct SampleArgs {
  std::string out;
  std::size_t random = 12, heldout = 2;
  double kind_bias = 0.13;
};

void cmd_sample_uarch(const SampleArgs& a, Run& run) {
  const auto suite = uarch::default_suite(run.common->seed, a.random, a.heldout, a.kind_bias);
  uarch::write_suite(a.out, suite);
  std::cout << suite.configs.size() << " configs (" << suite.train_ids.size() << " train, "
            << suite.heldout_ids.size() << " held out) in " << a.out << "\n";
  run.outputs = {a.out};
  run.write_manifest(fs::path(a.out) / "suite");
}

struct SimArgs {
  std::string trace, config, out;
};

void cmd_simulate(const SimArgs& a, Run& run) {
  const auto t = load_trace(a.trace);
  const auto c = resolve_config(a.config);
  const auto rt = uarch::simulate(t, c);
  const auto lat = uarch::incremental_latencies(rt);
  auto out = open_out(a.out);
  out << "index,retire_cycle,latency_cycles,latency_target\n";
  for (std::size_t i = 0; i < lat.size(); ++i)
    out << i << ',' << rt.retire_cycle[i] << ',' << lat[i] << ','
        << fmt(uarch::cycles_to_target(lat[i], c.clock_ps)) << '\n';
  out.close();
  std::cout << t.workload_id << " on " << c.config_id << ": " << rt.last() << " cycles, "
            << uarch::total_time_ps(rt, c) << " ps\n";
  run.inputs = {a.trace, a.config};
  run.outputs = {a.out};
  run.extra = {{"cycles", rt.last()}, {"time_ps", uarch::total_time_ps(rt, c)}};
  run.write_manifest(a.out);
}

struct BuildArgs {
  std::vector<std::string> traces, configs;
  std::string suite, set = "train", out;
  std::uint32_t context = 31;
};

void cmd_build_dataset(const BuildArgs& a, Run& run) {
  std::vector<trace::Trace> traces;
  for (const auto& p : a.traces) traces.push_back(load_trace(p));
  std::vector<uarch::UarchConfig> configs;
  if (!a.suite.empty()) {
    const auto suite = uarch::read_suite(a.suite);
    if (a.set == "train") configs = suite.select(suite.train_ids);
    else if (a.set == "heldout") configs = suite.select(suite.heldout_ids);
    else configs = suite.configs;
  }
  for (const auto& c : a.configs) configs.push_back(resolve_config(c));
  require(!configs.empty(), ErrorKind::kInvalidArgument, "give --suite or at least one --config");
  const auto ds = store::build_dataset(traces, configs, a.context, run.common->jobs);
  store::write_dataset(fs::path(a.out), ds);
  std::cout << ds.n() << " instructions x " << ds.K << " configs -> " << a.out << "\n";
  run.inputs = a.traces;
  run.outputs = {a.out};
  run.extra = {{"n", ds.n()}, {"configs", ds.config_ids}, {"workloads", ds.workload_ids}};
  run.write_manifest(a.out);
}

struct TrainArgs {
  std::string dataset, out, log, arch = "lstm";
  std::size_t epochs = 30, batch = 64, decay_every = 12, samples_per_epoch = 50000,
              val_samples = 5000, d = 32, layers = 2, hidden = 128;
  double lr = 3e-3;
  bool no_sd = false, no_entropy = false, no_augment = false;
};

void cmd_train(const TrainArgs& a, Run& run) {
  require_file(a.dataset);
  const auto ds = store::read_dataset(fs::path(a.dataset));
  const auto split = store::split(ds, {.seed = run.common->seed});
  model::ModelConfig mc;
  mc.arch = model::parse_arch(a.arch);
  mc.c = ds.C;
  mc.d = a.d;
  mc.L = a.layers;
  mc.hidden = a.hidden;
  model::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch = a.batch;
  tc.lr0 = a.lr;
  tc.decay_every = a.decay_every;
  tc.samples_per_epoch = a.samples_per_epoch;
  tc.val_samples = a.val_samples;
  tc.seed = run.common->seed;
  tc.mask.stack_distance = !a.no_sd;
  tc.mask.branch_entropy = !a.no_entropy;
  tc.augment_registers = !a.no_augment;
  std::ofstream log;
  if (!a.log.empty()) {
    log = open_out(a.log);
    log << "epoch,lr,train_loss,val_loss,forward_calls,seconds\n";
  }
  tc.on_epoch = [&](const model::EpochLog& e) {
    std::cout << "epoch " << e.epoch << " lr " << e.lr << " train " << e.train_loss << " val "
              << e.val_loss << " (" << std::fixed << std::setprecision(1) << e.seconds << "s)\n"
              << std::defaultfloat << std::setprecision(6) << std::flush;
    if (log.is_open())
      log << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ','
          << e.forward_calls << ',' << fmt(e.seconds) << '\n';
  };
  const auto res = model::train_foundation(ds, split, mc, tc);
  const json extra = {{"best_epoch", res.best_epoch}, {"best_val", res.best_val}, {"seed", tc.seed}};
  store::write_checkpoint(fs::path(a.out), model::to_checkpoint(res.encoder, res.table, tc.mask, extra.dump()));
  std::cout << "best epoch " << res.best_epoch << " val " << res.best_val << " -> " << a.out << "\n";
  run.inputs = {a.dataset};
  run.outputs = {a.out};
  if (!a.log.empty()) run.outputs.push_back(a.log);
  run.extra = extra;
  run.write_manifest(a.out);
}

struct EmbedArgs {
  std::string model, out, csv;
  std::vector<std::string> traces;
};

void cmd_embed(const EmbedArgs& a, Run& run) {
  auto m = load_model(a.model);
  auto programs = compose::load_programs(m.ck);
  for (const auto& p : a.traces) {
    const auto t = load_trace(p);
    auto rp = compose::program_representation(m.enc, features::extract_features(t), m.mask,
                                              t.workload_id, run.common->jobs);
    std::erase_if(programs, [&](const auto& q) { return q.workload_id == rp.workload_id; });
    programs.push_back(std::move(rp));
  }
  compose::store_programs(m.ck, programs);
  store::write_checkpoint(fs::path(a.out), m.ck);
  run.outputs = {a.out};
  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    compose::export_representations(out, compose::as_items(programs), m.enc.config().d);
    run.outputs.push_back(a.csv);
  }
  std::cout << programs.size() << " program representations in " << a.out << "\n";
  run.inputs = a.traces;
  run.inputs.insert(run.inputs.begin(), a.model);
  run.write_manifest(a.out);
}

struct PredictArgs {
  std::string model, out;
  std::vector<std::string> traces, configs;
  bool with_sim = false;
};

void cmd_predict(const PredictArgs& a, Run& run) {
  const auto m = load_model(a.model);
  std::vector<uarch::UarchConfig> configs;
  for (const auto& c : a.configs) configs.push_back(resolve_config(c));
  if (configs.empty())
    for (const auto& id : m.table.ids) configs.push_back(uarch::UarchConfig{.config_id = id});
  auto out = open_out(a.out);
  out << "program,config,instructions,predicted_time" << (a.with_sim ? ",simulated_time,rel_error" : "")
      << '\n';
  double err_sum = 0.0;
  std::size_t rows = 0;
  for (const auto& p : a.traces) {
    const auto t = load_trace(p);
    const auto rp = compose::program_representation(m.enc, features::extract_features(t), m.mask,
                                                    t.workload_id, run.common->jobs);
    for (const auto& c : configs) {
      const double pred = compose::predict_total_time(rp, table_row(m, c.config_id));
      out << t.workload_id << ',' << c.config_id << ',' << t.size() << ',' << fmt(pred);
      if (a.with_sim) {
        const double sim = uarch::cycles_to_target(uarch::simulate(t, c).last(), c.clock_ps);
        const double err = sim > 0 ? std::abs(pred - sim) / sim : 0.0;
        err_sum += err;
        out << ',' << fmt(sim) << ',' << fmt(err);
        std::cout << t.workload_id << " on " << c.config_id << ": predicted " << pred
                  << " simulated " << sim << " (" << 100 * err << "%)\n";
      }
      out << '\n';
      ++rows;
    }
  }
  out.close();
  run.inputs = a.traces;
  run.inputs.insert(run.inputs.begin(), a.model);
  run.outputs = {a.out};
  if (a.with_sim && rows > 0) {
    run.extra["mape"] = err_sum / static_cast<double>(rows);
    std::cout << "MAPE " << 100 * err_sum / static_cast<double>(rows) << "%\n";
  }
  run.write_manifest(a.out);
}

struct FinetuneArgs {
  std::string model, dataset, out;
  double fraction = 0.2, lr = 0.0, ridge = model::finetune_defaults().ridge;
  std::size_t epochs = 0;
};

void cmd_finetune(const FinetuneArgs& a, Run& run) {
  auto m = load_model(a.model);
  require_file(a.dataset);
  const auto ds = store::read_dataset(fs::path(a.dataset));
  std::vector<std::size_t> idx;
  Rng rng(mix_seed(run.common->seed, 0xF17E));
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (rng.uniform() < a.fraction) idx.push_back(i);
  auto tc = model::finetune_defaults();
  tc.seed = run.common->seed;
  tc.mask = m.mask;
  if (a.epochs > 0) tc.epochs = a.epochs;
  if (a.lr > 0) tc.lr0 = a.lr;
  tc.ridge = a.ridge;
  const auto ft = model::finetune_uarch(m.enc, ds, idx, tc);
  for (std::size_t j = 0; j < ft.table.k(); ++j) {
    const auto& id = ft.table.ids[j];
    const auto it = std::find(m.table.ids.begin(), m.table.ids.end(), id);
    if (it == m.table.ids.end()) m.table.add(id, ft.table.row(j));
    else std::ranges::copy(ft.table.row(j), m.table.row(static_cast<std::size_t>(it - m.table.ids.begin())).begin());
  }
  model::set_table(m.ck, m.table);
  store::write_checkpoint(fs::path(a.out), m.ck);
  std::cout << ft.table.k() << " configs fitted on " << idx.size() << " instructions, loss "
            << ft.final_loss << " -> " << a.out << "\n";
  run.inputs = {a.model, a.dataset};
  run.outputs = {a.out};
  run.extra = {{"tuning_instructions", idx.size()}, {"final_loss", ft.final_loss}, {"configs", ft.table.ids}};
  run.write_manifest(a.out);
}

struct DseArgs {
  std::string model, base = "inorder_little", out, surface, save_param, load_param;
  std::vector<std::string> traces, tune_traces;
  std::size_t tune_configs = 18, hidden = 32;
  bool with_sim = false;
};

void cmd_dse(const DseArgs& a, Run& run) {
  const auto m = load_model(a.model);
  const auto base = resolve_config(a.base);
  dse::UarchParamModel pm;
  if (!a.load_param.empty()) {
    require_file(a.load_param);
    pm = dse::UarchParamModel::from_checkpoint(store::read_checkpoint(fs::path(a.load_param)));
  } else {
    require(!a.tune_traces.empty(), ErrorKind::kInvalidArgument,
            "give --tune-trace (or --load-param-model)");
    std::vector<trace::Trace> tune;
    for (const auto& p : a.tune_traces) tune.push_back(load_trace(p));
    const auto pts = dse::sample_grid(a.tune_configs, run.common->seed);
    const auto ds = store::build_dataset(tune, dse::grid_configs(base, pts),
                                         static_cast<std::uint32_t>(m.enc.config().c), run.common->jobs);
    std::vector<std::size_t> idx(ds.n());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto tc = dse::param_model_defaults();
    tc.seed = run.common->seed;
    tc.mask = m.mask;
    const auto res = dse::train_param_model(m.enc, ds, idx, pts, tc, a.hidden);
    pm = res.model;
    run.extra["tuning_loss"] = res.final_loss;
    if (!a.save_param.empty()) {
      store::write_checkpoint(fs::path(a.save_param), pm.to_checkpoint());
      run.outputs.push_back(a.save_param);
    }
  }
  const auto grid = dse::cache_grid();
  auto out = open_out(a.out);
  bool header = true;
  for (const auto& p : a.traces) {
    const auto t = load_trace(p);
    const auto rp = compose::program_representation(m.enc, features::extract_features(t), m.mask,
                                                    t.workload_id, run.common->jobs);
    auto pts = dse::explore(pm, rp, grid);
    std::size_t sim_rank = 0;
    if (a.with_sim) {
      const auto truth = dse::exhaustive(t, base, grid, run.common->jobs);
      for (auto& q : pts)
        for (const auto& s : truth)
          if (s.p == q.p) q.simulated_time = s.simulated_time;
      for (const auto& s : truth)
        if (s.p == pts.front().p) sim_rank = s.rank;
    }
    dse::write_ranking(out, t.workload_id, pts, header);
    header = false;
    const auto& best = pts.front();
    std::cout << t.workload_id << ": best L1D " << best.p.l1d_kb << "KB L2 " << best.p.l2_kb << "KB";
    if (a.with_sim) std::cout << " (rank " << sim_rank << " by simulation)";
    std::cout << "\n";
    run.extra["selected"][t.workload_id] = {{"l1_kb", best.p.l1d_kb}, {"l2_kb", best.p.l2_kb}};
    if (a.with_sim) run.extra["simulated_rank"][t.workload_id] = sim_rank;
    if (!a.surface.empty()) {
      fs::path sp = a.surface;
      if (a.traces.size() > 1)
        sp = sp.parent_path() / (sp.stem().string() + "_" + t.workload_id + sp.extension().string());
      auto s = open_out(sp);
      dse::write_surface(s, pts);
      run.outputs.push_back(sp.string());
    }
  }
  out.close();
  run.inputs = a.traces;
  run.inputs.insert(run.inputs.begin(), a.model);
  run.outputs.insert(run.outputs.begin(), a.out);
  run.write_manifest(a.out);
}

struct TilingArgs {
  std::string model, config, out;
  std::size_t n = 32;
  std::vector<std::size_t> tiles;
};

void cmd_tiling(const TilingArgs& a, Run& run) {
  const auto m = load_model(a.model);
  const auto c = resolve_config(a.config);
  auto tiles = a.tiles;
  if (tiles.empty())
    for (std::size_t t = 1; t <= a.n; t *= 2)
      if (a.n % t == 0) tiles.push_back(t);
  const auto pts = dse::tiling_sweep(a.n, tiles, c, m.enc, table_row(m, c.config_id), m.mask,
                                     run.common->seed, run.common->jobs);
  auto out = open_out(a.out);
  dse::write_tiling(out, pts);
  out.close();
  std::vector<double> pr, sr;
  for (const auto& p : pts) {
    pr.push_back(p.predicted_time);
    sr.push_back(p.simulated_time);
  }
  const auto best = [&](const std::vector<double>& v) {
    return pts[static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin())].tile;
  };
  std::cout << "predicted best tile " << best(pr) << ", simulated best tile " << best(sr);
  if (pts.size() > 1) std::cout << ", spearman " << compose::spearman(pr, sr);
  std::cout << "\n";
  run.inputs = {a.model, a.config};
  run.outputs = {a.out};
  run.extra = {{"predicted_best", best(pr)}, {"simulated_best", best(sr)}};
  run.write_manifest(a.out);
}

struct PhaseArgs {
  std::string model, trace, config, out;
  std::size_t segment = 10000;
};

void cmd_phase(const PhaseArgs& a, Run& run) {
  const auto m = load_model(a.model);
  const auto t = load_trace(a.trace);
  const auto c = resolve_config(a.config);
  const auto ps = compose::phase_series(m.enc, features::extract_features(t), m.mask, a.segment,
                                        t.workload_id, run.common->jobs);
  const auto pred = compose::predicted_cpi(ps, table_row(m, c.config_id), c.clock_ps);
  const auto sim = compose::simulated_cpi(uarch::simulate(t, c), a.segment);
  auto out = open_out(a.out);
  out << "segment,first_instruction,instructions,predicted_cpi,simulated_cpi\n";
  std::uint64_t first = 0;
  for (std::size_t s = 0; s < ps.segments.size(); ++s) {
    out << s << ',' << first << ',' << ps.segments[s].n << ',' << fmt(pred[s]) << ',' << fmt(sim[s]) << '\n';
    first += ps.segments[s].n;
  }
  out.close();
  run.inputs = {a.model, a.trace, a.config};
  run.outputs = {a.out};
  if (pred.size() > 1) {
    const double r = compose::pearson(pred, sim);
    std::cout << ps.segments.size() << " segments, pearson " << r << "\n";
    run.extra["pearson"] = r;
  }
  run.write_manifest(a.out);
}

// gen -> sample-uarch -> build-dataset -> train -> predict at toy scale.
void cmd_demo(const std::string& dir, Run& run) {
  fs::create_directories(dir);
  const std::uint64_t seed = run.common->seed;
  std::vector<trace::Trace> traces;
  const std::map<trace::WorkloadKind, trace::WorkloadParams> small = {
      {trace::WorkloadKind::kStream, {{"len", 1500}, {"passes", 2}}},
      {trace::WorkloadKind::kPointerChase, {{"nodes", 2048}, {"steps", 4000}}},
      {trace::WorkloadKind::kMatmulTiled, {{"n", 16}, {"tile", 4}}},
      {trace::WorkloadKind::kBranchy, {{"len", 3000}}},
      {trace::WorkloadKind::kMixed, {{"len", 6000}, {"phase_len", 500}}},
      {trace::WorkloadKind::kStrideScan, {{"len", 5000}, {"stride", 9}}},
      {trace::WorkloadKind::kReduce, {{"len", 5000}, {"passes", 1}}},
  };
  for (const auto& [kind, params] : small) {
    auto t = trace::gen_workload(kind, params, seed);
    t.workload_id = std::string(trace::workload_name(kind));
    trace::write_trace(fs::path(dir) / (t.workload_id + ".pvtr"), t);
    traces.push_back(std::move(t));
  }
  std::cout << "generated " << traces.size() << " traces\n";
  const auto suite = uarch::default_suite(seed, 4, 1);
  uarch::write_suite(fs::path(dir) / "suite", suite);
  const std::vector<trace::Trace> train(traces.begin(), traces.end() - 1);
  const auto ds = store::build_dataset(train, suite.select(suite.train_ids), 15, run.common->jobs);
  store::write_dataset(fs::path(dir) / "train.pvds", ds);
  std::cout << "dataset: " << ds.n() << " instructions x " << ds.K << " configs\n";
  model::ModelConfig mc{.c = 15, .d = 16, .L = 1};
  model::TrainConfig tc;
  tc.epochs = 6;
  tc.lr0 = 3e-3;
  tc.decay_every = 4;
  tc.samples_per_epoch = 20000;
  tc.val_samples = 2000;
  tc.seed = seed;
  tc.on_epoch = [](const model::EpochLog& e) {
    std::cout << "epoch " << e.epoch << " val " << e.val_loss << "\n" << std::flush;
  };
  const auto res = model::train_foundation(ds, store::split(ds, {.seed = seed}), mc, tc);
  store::write_checkpoint(fs::path(dir) / "model.pvck", model::to_checkpoint(res.encoder, res.table, {}));
  auto out = open_out(fs::path(dir) / "predict.csv");
  out << "program,config,predicted_time,simulated_time,rel_error\n";
  for (const auto& t : traces) {
    const auto rp = compose::program_representation(res.encoder, features::extract_features(t), {},
                                                    t.workload_id);
    for (const auto& c : suite.select(suite.train_ids)) {
      const double pred = compose::predict_total_time(rp, res.table.row(c.config_id));
      const double sim = uarch::cycles_to_target(uarch::simulate(t, c).last(), c.clock_ps);
      out << t.workload_id << ',' << c.config_id << ',' << fmt(pred) << ',' << fmt(sim) << ','
          << fmt(std::abs(pred - sim) / sim) << '\n';
    }
  }
  out.close();
  std::cout << "predictions in " << (fs::path(dir) / "predict.csv").string() << "\n";
  run.outputs = {dir};
  run.write_manifest(fs::path(dir) / "demo");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perfvec: compositional performance modeling on synthetic traces"};
  app.name("perfvec");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  std::function<void(Run&)> action;

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen", "Generate a synthetic workload trace");
  s_gen->add_option("--workload", gen.workload, "Workload family")
      ->required()
      ->check(CLI::IsMember({"stream", "pointer_chase", "matmul_tiled", "branchy", "mixed",
                             "stride_scan", "reduce", "stencil"}));
  s_gen->add_option("--param", gen.params, "Workload parameter key=value (repeatable)");
  s_gen->add_option("--out", gen.out, "Output trace (.pvtr)")->required();
  add_common(s_gen, common);
  s_gen->callback([&] { action = [&](Run& r) { cmd_gen(gen, r); }; });

  SampleArgs sample;
  auto* s_sample = app.add_subcommand("sample-uarch", "Sample a microarchitecture config suite");
  s_sample->add_option("--out", sample.out, "Output directory")->required();
  s_sample->add_option("--random", sample.random, "Random configs to sample")->capture_default_str();
  s_sample->add_option("--heldout", sample.heldout, "Random configs held out")->capture_default_str();
  s_sample->add_option("--kind-bias", sample.kind_bias, "Fraction of in-order cores")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  add_common(s_sample, common);
  s_sample->callback([&] { action = [&](Run& r) { cmd_sample_uarch(sample, r); }; });

  SimArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Simulate a trace; write per-instruction retire times");
  s_sim->add_option("--trace", sim.trace, "Input trace")->required();
  s_sim->add_option("--config", sim.config, "Config file or preset name")->required();
  s_sim->add_option("--out", sim.out, "Output CSV")->required();
  add_common(s_sim, common, false);
  s_sim->callback([&] { action = [&](Run& r) { cmd_simulate(sim, r); }; });

  BuildArgs build;
  auto* s_build = app.add_subcommand("build-dataset", "Simulate traces on every config; write a PVDS dataset");
  s_build->add_option("--trace", build.traces, "Input traces")->required();
  s_build->add_option("--suite", build.suite, "Config suite directory");
  s_build->add_option("--set", build.set, "Which suite configs to use")
      ->check(CLI::IsMember({"train", "heldout", "all"}))
      ->capture_default_str();
  s_build->add_option("--config", build.configs, "Extra config file or preset (repeatable)");
  s_build->add_option("--context", build.context, "Context length c")->capture_default_str();
  s_build->add_option("--out", build.out, "Output dataset (.pvds)")->required();
  add_common(s_build, common, false);
  s_build->callback([&] { action = [&](Run& r) { cmd_build_dataset(build, r); }; });

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train the encoder and config table");
  s_train->add_option("--dataset", train.dataset, "Training dataset (.pvds)")->required();
  s_train->add_option("--out", train.out, "Output checkpoint (.pvck)")->required();
  s_train->add_option("--log", train.log, "Per-epoch CSV log");
  s_train->add_option("--arch", train.arch, "Encoder")->check(CLI::IsMember({"lstm", "mlp"}))->capture_default_str();
  s_train->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  s_train->add_option("--batch", train.batch, "Minibatch size")->capture_default_str();
  s_train->add_option("--lr", train.lr, "Initial learning rate")->capture_default_str();
  s_train->add_option("--decay-every", train.decay_every, "Epochs between 10x decays")->capture_default_str();
  s_train->add_option("--samples-per-epoch", train.samples_per_epoch, "0 = all")->capture_default_str();
  s_train->add_option("--val-samples", train.val_samples, "0 = all")->capture_default_str();
  s_train->add_option("--d", train.d, "Representation size")->capture_default_str();
  s_train->add_option("--layers", train.layers, "LSTM layers")->capture_default_str();
  s_train->add_option("--hidden", train.hidden, "MLP hidden width")->capture_default_str();
  s_train->add_flag("--no-stack-distance", train.no_sd, "Zero the stack distance features");
  s_train->add_flag("--no-entropy", train.no_entropy, "Zero the branch entropy features");
  s_train->add_flag("--no-augment", train.no_augment, "Disable register renaming augmentation");
  add_common(s_train, common);
  s_train->callback([&] { action = [&](Run& r) { cmd_train(train, r); }; });

  EmbedArgs embed;
  auto* s_embed = app.add_subcommand("embed", "Compute program representations into a checkpoint");
  s_embed->add_option("--model", embed.model, "Model checkpoint")->required();
  s_embed->add_option("--trace", embed.traces, "Input traces")->required();
  s_embed->add_option("--out", embed.out, "Output checkpoint")->required();
  s_embed->add_option("--csv", embed.csv, "Also export representations as CSV");
  add_common(s_embed, common, false);
  s_embed->callback([&] { action = [&](Run& r) { cmd_embed(embed, r); }; });

  PredictArgs pred;
  auto* s_pred = app.add_subcommand("predict", "Predict total execution time");
  s_pred->add_option("--model", pred.model, "Model checkpoint")->required();
  s_pred->add_option("--trace", pred.traces, "Input traces")->required();
  s_pred->add_option("--config", pred.configs, "Config files or presets (default: every table row)");
  s_pred->add_option("--out", pred.out, "Output CSV")->required();
  s_pred->add_flag("--with-sim", pred.with_sim, "Also simulate and report relative error");
  add_common(s_pred, common, false);
  s_pred->callback([&] { action = [&](Run& r) { cmd_predict(pred, r); }; });

  FinetuneArgs ft;
  auto* s_ft = app.add_subcommand("finetune", "Fit embeddings for new configs with the encoder frozen");
  s_ft->add_option("--model", ft.model, "Model checkpoint")->required();
  s_ft->add_option("--dataset", ft.dataset, "Tuning dataset with the new configs")->required();
  s_ft->add_option("--fraction", ft.fraction, "Fraction of instructions used")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  s_ft->add_option("--epochs", ft.epochs, "0 = default");
  s_ft->add_option("--lr", ft.lr, "0 = default");
  s_ft->add_option("--ridge", ft.ridge, "L2 penalty on rows, relative to the mean representation energy")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s_ft->add_option("--out", ft.out, "Output checkpoint")->required();
  add_common(s_ft, common);
  s_ft->callback([&] { action = [&](Run& r) { cmd_finetune(ft, r); }; });

  DseArgs dse_a;
  auto* s_dse = app.add_subcommand("dse", "Rank the L1D x L2 cache grid for each program");
  s_dse->add_option("--model", dse_a.model, "Model checkpoint")->required();
  s_dse->add_option("--trace", dse_a.traces, "Programs to explore")->required();
  s_dse->add_option("--base", dse_a.base, "Base config file or preset")->capture_default_str();
  s_dse->add_option("--tune-trace", dse_a.tune_traces, "Traces for fitting the parameter model");
  s_dse->add_option("--tune-configs", dse_a.tune_configs, "Grid points simulated for tuning")
      ->check(CLI::Range(2, 36))
      ->capture_default_str();
  s_dse->add_option("--hidden", dse_a.hidden, "Parameter model hidden width")->capture_default_str();
  s_dse->add_option("--save-param-model", dse_a.save_param, "Write the fitted parameter model");
  s_dse->add_option("--load-param-model", dse_a.load_param, "Reuse a fitted parameter model");
  s_dse->add_option("--out", dse_a.out, "Ranking CSV")->required();
  s_dse->add_option("--surface", dse_a.surface, "Objective surface CSV (suffixed per program)");
  s_dse->add_flag("--with-sim", dse_a.with_sim, "Also simulate every grid point");
  add_common(s_dse, common);
  s_dse->callback([&] { action = [&](Run& r) { cmd_dse(dse_a, r); }; });

  TilingArgs tiling;
  auto* s_tiling = app.add_subcommand("tiling", "Predicted and simulated time of tiled matmul");
  s_tiling->add_option("--model", tiling.model, "Model checkpoint")->required();
  s_tiling->add_option("--config", tiling.config, "Config file or preset (must have an embedding)")->required();
  s_tiling->add_option("--n", tiling.n, "Matrix size")->capture_default_str();
  s_tiling->add_option("--tiles", tiling.tiles, "Tile sizes (default: powers of two dividing n)")->delimiter(',');
  s_tiling->add_option("--out", tiling.out, "Output CSV")->required();
  add_common(s_tiling, common);
  s_tiling->callback([&] { action = [&](Run& r) { cmd_tiling(tiling, r); }; });

  PhaseArgs phase;
  auto* s_phase = app.add_subcommand("phase", "Per-segment predicted and simulated CPI");
  s_phase->add_option("--model", phase.model, "Model checkpoint")->required();
  s_phase->add_option("--trace", phase.trace, "Input trace")->required();
  s_phase->add_option("--config", phase.config, "Config file or preset (must have an embedding)")->required();
  s_phase->add_option("--segment", phase.segment, "Instructions per segment")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s_phase->add_option("--out", phase.out, "Output CSV")->required();
  add_common(s_phase, common, false);
  s_phase->callback([&] { action = [&](Run& r) { cmd_phase(phase, r); }; });

  auto* s_self = app.add_subcommand("selftest", "Run built-in oracle checks; PASS/FAIL per check");
  add_common(s_self, common);
  int self_status = 0;
  s_self->callback([&] {
    action = [&](Run&) { self_status = cli::run_selftest(std::cout, common.seed); };
  });

  std::string demo_dir = "perfvec-demo";
  auto* s_demo = app.add_subcommand("demo", "Tiny end-to-end run: gen, sample, build, train, predict");
  s_demo->add_option("--out", demo_dir, "Output directory")->capture_default_str();
  add_common(s_demo, common);
  s_demo->callback([&] { action = [&](Run& r) { cmd_demo(demo_dir, r); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << error_kind_name(ErrorKind::kInvalidArgument) << ": " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kInvalidArgument);
  }

  try {
    Run run;
    run.sub = app.get_subcommands().front();
    run.common = &common;
    action(run);
    if (!common.manifest.empty() && run.sub->get_name() == "selftest") run.write_manifest(common.manifest);
    return self_status;
  } catch (const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << error_kind_name(ErrorKind::kNotFound) << ": " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kNotFound);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
