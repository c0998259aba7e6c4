// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/compose.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <numeric>
#include <ostream>

#include "perfvec/error.hpp"

namespace perfvec::compose {

ProgramRepresentation sum_representations(std::span<const double> R, std::size_t d,
                                          std::string workload_id) {
  require(d > 0 && R.size() % d == 0, ErrorKind::kShape, "representation block is not n x d");
  ProgramRepresentation p{std::move(workload_id), R.size() / d, std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t j = 0; j < d; ++j) p.rp[j] += R[i * d + j];
  return p;
}

ProgramRepresentation program_representation(const model::Encoder& enc,
                                             const features::FeatureMatrix& fm,
                                             const features::FeatureMask& mask,
                                             std::string workload_id, unsigned jobs,
                                             std::uint64_t* forward_calls) {
  const std::size_t d = enc.config().d;
  ProgramRepresentation p{std::move(workload_id), fm.rows, std::vector<double>(d, 0.0)};
  model::encode_trace(
      enc, fm, mask,
      [&](std::size_t, std::size_t count, const double* R) {
        for (std::size_t i = 0; i < count; ++i)
          for (std::size_t j = 0; j < d; ++j) p.rp[j] += R[i * d + j];
      },
      jobs, forward_calls);
  return p;
}

double predict_total_time(const ProgramRepresentation& p, std::span<const double> m) {
  require(m.size() == p.rp.size(), ErrorKind::kShape,
          "embedding has d=" + std::to_string(m.size()) + ", program has d=" +
              std::to_string(p.rp.size()));
  double s = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) s += p.rp[j] * m[j];
  return s;
}

std::uint64_t PhaseSeries::n() const {
  std::uint64_t total = 0;
  for (const auto& s : segments) total += s.n;
  return total;
}

PhaseSeries phase_series(const model::Encoder& enc, const features::FeatureMatrix& fm,
                         const features::FeatureMask& mask, std::size_t segment_len,
                         const std::string& workload_id, unsigned jobs) {
  require(segment_len >= 1, ErrorKind::kInvalidArgument, "segment length must be at least 1");
  const std::size_t d = enc.config().d;
  PhaseSeries ps;
  ps.segment_len = segment_len;
  std::vector<double> run(d, 0.0);
  std::size_t seen = 0;
  auto open_segment = [&] {
    ps.segments.push_back({workload_id + "#" + std::to_string(ps.segments.size()), 0,
                           std::vector<double>(d, 0.0)});
  };
  model::encode_trace(
      enc, fm, mask,
      [&](std::size_t, std::size_t count, const double* R) {
        for (std::size_t i = 0; i < count; ++i, ++seen) {
          if (seen % segment_len == 0) {
            if (!ps.segments.empty()) ps.prefix.push_back(run);
            open_segment();
          }
          auto& seg = ps.segments.back();
          for (std::size_t j = 0; j < d; ++j) {
            seg.rp[j] += R[i * d + j];
            run[j] += R[i * d + j];
          }
          ++seg.n;
        }
      },
      jobs);
  if (!ps.segments.empty()) ps.prefix.push_back(run);
  return ps;
}

std::vector<double> predicted_cpi(const PhaseSeries& ps, std::span<const double> m,
                                  std::uint32_t clock_ps) {
  std::vector<double> out;
  for (const auto& s : ps.segments)
    out.push_back(predict_total_time(s, m) * 100.0 / clock_ps / static_cast<double>(s.n));
  return out;
}

std::vector<double> simulated_cpi(const uarch::RetireTimes& rt, std::size_t segment_len) {
  require(segment_len >= 1, ErrorKind::kInvalidArgument, "segment length must be at least 1");
  std::vector<double> out;
  std::uint64_t prev = 0;
  for (std::size_t first = 0; first < rt.size(); first += segment_len) {
    const std::size_t last = std::min(rt.size(), first + segment_len) - 1;
    const std::uint64_t end = rt.retire_cycle[last];
    out.push_back(static_cast<double>(end - prev) / static_cast<double>(last - first + 1));
    prev = end;
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::kShape,
          "correlation needs two equal-length series of at least 2 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

// Ranks starting at 1; ties share their average rank.
std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  require(!quoted, ErrorKind::kFormat, "unterminated quote in CSV line");
  return out;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a), rb = ranks(b);
  return pearson(ra, rb);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void export_representations(std::ostream& out, const std::vector<NamedVector>& items,
                            std::size_t d) {
  out << "id";
  for (std::size_t j = 0; j < d; ++j) out << ",v" << j;
  out << "\n";
  for (const auto& it : items) {
    require(it.v.size() == d, ErrorKind::kShape, "item '" + it.id + "' has the wrong dimension");
    out << csv_field(it.id);
    for (double v : it.v) out << ',' << format_double(v);
    out << "\n";
  }
}

std::vector<NamedVector> parse_representations(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kFormat, "missing CSV header");
  const std::size_t cols = csv_split(line).size();
  require(cols >= 1 && csv_split(line)[0] == "id", ErrorKind::kFormat, "CSV header must start with 'id'");
  std::vector<NamedVector> items;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_split(line);
    require(f.size() == cols, ErrorKind::kFormat, "CSV row has " + std::to_string(f.size()) +
                                                      " fields, header has " + std::to_string(cols));
    NamedVector it{f[0], {}};
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v = 0.0;
      const auto res = std::from_chars(f[j].data(), f[j].data() + f[j].size(), v);
      require(res.ec == std::errc() && res.ptr == f[j].data() + f[j].size(), ErrorKind::kFormat,
              "bad number '" + f[j] + "'");
      it.v.push_back(v);
    }
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<NamedVector> as_items(const std::vector<ProgramRepresentation>& ps) {
  std::vector<NamedVector> out;
  for (const auto& p : ps) out.push_back({p.workload_id, p.rp});
  return out;
}

std::vector<NamedVector> as_items(const model::UarchTable& table) {
  std::vector<NamedVector> out;
  for (std::size_t j = 0; j < table.k(); ++j) {
    const auto r = table.row(j);
    out.push_back({table.ids[j], {r.begin(), r.end()}});
  }
  return out;
}

void store_programs(store::Checkpoint& ck, const std::vector<ProgramRepresentation>& ps) {
  nlohmann::json counts = nlohmann::json::object();
  if (const auto it = ck.text.find("programs.json"); it != ck.text.end())
    counts = nlohmann::json::parse(it->second);
  for (const auto& p : ps) {
    require(!p.workload_id.empty(), ErrorKind::kInvalidArgument, "program representation has no id");
    ck.tensors["prog/" + p.workload_id] = {{p.rp.size()}, p.rp};
    counts[p.workload_id] = p.n;
  }
  ck.text["programs.json"] = counts.dump(2);
}

std::vector<ProgramRepresentation> load_programs(const store::Checkpoint& ck) {
  nlohmann::json counts = nlohmann::json::object();
  if (const auto it = ck.text.find("programs.json"); it != ck.text.end()) {
    try {
      counts = nlohmann::json::parse(it->second);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, std::string("programs.json: ") + e.what());
    }
  }
  std::vector<ProgramRepresentation> out;
  for (const auto& [name, t] : ck.tensors) {
    if (!name.starts_with("prog/")) continue;
    ProgramRepresentation p{name.substr(5), 0, t.data};
    if (counts.contains(p.workload_id)) p.n = counts[p.workload_id].get<std::uint64_t>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace perfvec::compose
