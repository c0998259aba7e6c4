// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include "perfvec/error.hpp"
#include "perfvec/model.hpp"

namespace perfvec::model {

using nlohmann::json;

namespace {

constexpr const char* kMeta = "model.json";

json meta_of(const store::Checkpoint& ck) {
  const auto it = ck.text.find(kMeta);
  require(it != ck.text.end(), ErrorKind::kFormat, "checkpoint has no model.json section");
  try {
    return json::parse(it->second);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("model.json: ") + e.what());
  }
}

}  // namespace

store::Checkpoint to_checkpoint(const Encoder& enc, const UarchTable& table,
                                const features::FeatureMask& mask, const std::string& extra_json) {
  store::Checkpoint ck;
  const auto& mc = enc.config();
  for (const auto& t : enc.tensors()) {
    store::Tensor st;
    st.dims = t.rows == 1 ? std::vector<std::uint64_t>{t.cols} : std::vector<std::uint64_t>{t.rows, t.cols};
    st.data.assign(enc.data(t), enc.data(t) + t.size());
    ck.tensors[t.name] = std::move(st);
  }
  json meta;
  meta["arch"] = arch_name(mc.arch);
  meta["F"] = mc.F;
  meta["c"] = mc.c;
  meta["d"] = mc.d;
  meta["L"] = mc.L;
  meta["hidden"] = mc.hidden;
  meta["num_params"] = enc.num_params();
  meta["mask"] = {{"stack_distance", mask.stack_distance}, {"branch_entropy", mask.branch_entropy}};
  json extra = json::parse(extra_json);
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  ck.text[kMeta] = meta.dump(2);
  set_table(ck, table);
  return ck;
}

void set_table(store::Checkpoint& ck, const UarchTable& table) {
  for (auto it = ck.tensors.begin(); it != ck.tensors.end();)
    it = it->first.starts_with("uarch/") ? ck.tensors.erase(it) : std::next(it);
  for (std::size_t j = 0; j < table.k(); ++j) {
    const auto r = table.row(j);
    ck.tensors["uarch/" + table.ids[j]] = {{table.d}, {r.begin(), r.end()}};
  }
  json meta = ck.text.count(kMeta) ? meta_of(ck) : json::object();
  meta["k"] = table.k();
  meta["table_ids"] = table.ids;
  ck.text[kMeta] = meta.dump(2);
}

Encoder encoder_from(const store::Checkpoint& ck) {
  const json meta = meta_of(ck);
  ModelConfig mc;
  try {
    mc.arch = parse_arch(meta.at("arch").get<std::string>());
    mc.F = meta.at("F").get<std::size_t>();
    mc.c = meta.at("c").get<std::size_t>();
    mc.d = meta.at("d").get<std::size_t>();
    mc.L = meta.at("L").get<std::size_t>();
    mc.hidden = meta.at("hidden").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("model.json: ") + e.what());
  }
  Encoder enc = Encoder::zeros(mc);
  for (const auto& t : enc.tensors()) {
    const auto it = ck.tensors.find(t.name);
    require(it != ck.tensors.end(), ErrorKind::kFormat, "checkpoint lacks tensor '" + t.name + "'");
    require(it->second.data.size() == t.size(), ErrorKind::kShape,
            "tensor '" + t.name + "' has the wrong size");
    std::copy(it->second.data.begin(), it->second.data.end(), enc.params().begin() + t.offset);
  }
  return enc;
}

UarchTable table_from(const store::Checkpoint& ck) {
  const json meta = meta_of(ck);
  UarchTable table;
  table.d = meta.value("d", std::size_t{0});
  for (const auto& id : meta.value("table_ids", std::vector<std::string>{})) {
    const auto it = ck.tensors.find("uarch/" + id);
    require(it != ck.tensors.end(), ErrorKind::kFormat, "checkpoint lacks row 'uarch/" + id + "'");
    table.add(id, it->second.data);
  }
  return table;
}

features::FeatureMask mask_from(const store::Checkpoint& ck) {
  const json meta = meta_of(ck);
  features::FeatureMask m;
  if (meta.contains("mask")) {
    m.stack_distance = meta["mask"].value("stack_distance", true);
    m.branch_entropy = meta["mask"].value("branch_entropy", true);
  }
  return m;
}

}  // namespace perfvec::model
