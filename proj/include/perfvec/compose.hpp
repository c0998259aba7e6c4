// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "perfvec/features.hpp"
#include "perfvec/model.hpp"
#include "perfvec/store.hpp"
#include "perfvec/uarch.hpp"

namespace perfvec::compose {

// R_p: the f64 sum of every instruction representation, added left to right
// in program order.
struct ProgramRepresentation {
  std::string workload_id;
  std::uint64_t n = 0;
  std::vector<double> rp;

  std::size_t d() const { return rp.size(); }
  friend bool operator==(const ProgramRepresentation&, const ProgramRepresentation&) = default;
};

ProgramRepresentation sum_representations(std::span<const double> R, std::size_t d,
                                          std::string workload_id = {});

// Windows come from the uncut trace; chunks are summed in program order, so
// the result does not depend on `jobs`.
ProgramRepresentation program_representation(const model::Encoder& enc,
                                             const features::FeatureMatrix& fm,
                                             const features::FeatureMask& mask,
                                             std::string workload_id = {}, unsigned jobs = 1,
                                             std::uint64_t* forward_calls = nullptr);

// R_p . m in 0.1 ns units.
double predict_total_time(const ProgramRepresentation& p, std::span<const double> m);

struct PhaseSeries {
  std::size_t segment_len = 10000;
  std::vector<ProgramRepresentation> segments;  // n = instructions in the segment
  // Running left-to-right sum at the end of each segment; prefix.back() is
  // bit-identical to program_representation() over the same trace.
  std::vector<std::vector<double>> prefix;

  std::uint64_t n() const;
};

PhaseSeries phase_series(const model::Encoder& enc, const features::FeatureMatrix& fm,
                         const features::FeatureMask& mask, std::size_t segment_len,
                         const std::string& workload_id = {}, unsigned jobs = 1);

// Cycles per instruction of each segment.
std::vector<double> predicted_cpi(const PhaseSeries& ps, std::span<const double> m,
                                  std::uint32_t clock_ps);
std::vector<double> simulated_cpi(const uarch::RetireTimes& rt, std::size_t segment_len);

double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

// CSV: header "id,v0,..,v{d-1}", one row per item, shortest round-trip text.
struct NamedVector {
  std::string id;
  std::vector<double> v;
  friend bool operator==(const NamedVector&, const NamedVector&) = default;
};

void export_representations(std::ostream& out, const std::vector<NamedVector>& items,
                            std::size_t d);
std::vector<NamedVector> parse_representations(std::istream& in);

std::vector<NamedVector> as_items(const std::vector<ProgramRepresentation>& ps);
std::vector<NamedVector> as_items(const model::UarchTable& table);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Checkpoint sections "prog/<id>" plus instruction counts in "programs.json".
void store_programs(store::Checkpoint& ck, const std::vector<ProgramRepresentation>& ps);
std::vector<ProgramRepresentation> load_programs(const store::Checkpoint& ck);

}  // namespace perfvec::compose
