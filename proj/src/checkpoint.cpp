#include "tpc/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace tpc {

using nlohmann::json;

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json j;
  j["format_version"] = CheckpointData::kFormatVersion;
  json params = json::object();
  for (const auto& [name, p] : data.params) {
    params[name] = {{"shape", p.shape}, {"values", p.values}};
  }
  j["params"] = std::move(params);
  json opts = json::object();
  for (const auto& [name, o] : data.optimizers) {
    opts[name] = {{"step_count", o.step_count}, {"m", o.m}, {"v", o.v}};
  }
  j["optimizers"] = std::move(opts);
  j["meta"] = data.meta;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << j.dump();
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  json j;
  in >> j;
  if (!j.contains("format_version")) {
    throw std::runtime_error("checkpoint: missing format_version in " + path);
  }
  int version = j["format_version"].get<int>();
  if (version != CheckpointData::kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format_version " +
                             std::to_string(version));
  }
  CheckpointData data;
  for (const auto& [name, p] : j["params"].items()) {
    CheckpointData::Param param;
    param.shape = p["shape"].get<Shape>();
    param.values = p["values"].get<std::vector<double>>();
    if (static_cast<int>(param.values.size()) != shape_size(param.shape)) {
      throw std::runtime_error("checkpoint: value count mismatch for " + name);
    }
    data.params.emplace(name, std::move(param));
  }
  if (j.contains("optimizers")) {
    for (const auto& [name, o] : j["optimizers"].items()) {
      CheckpointData::OptState st;
      st.step_count = o["step_count"].get<int64_t>();
      st.m = o["m"].get<std::vector<std::vector<double>>>();
      st.v = o["v"].get<std::vector<std::vector<double>>>();
      data.optimizers.emplace(name, std::move(st));
    }
  }
  if (j.contains("meta")) {
    data.meta = j["meta"].get<std::map<std::string, std::string>>();
  }
  return data;
}

void pack_store(CheckpointData& ckpt, const std::string& prefix,
                const ParamStore& store) {
  for (const auto& path : store.paths()) {
    const Tensor& t = store.at(path);
    CheckpointData::Param p;
    p.shape = t.shape();
    p.values.assign(t.values().begin(), t.values().end());
    ckpt.params[prefix + "/" + path] = std::move(p);
  }
}

void unpack_store(const CheckpointData& ckpt, const std::string& prefix,
                  ParamStore& store) {
  for (const auto& path : store.paths()) {
    auto it = ckpt.params.find(prefix + "/" + path);
    if (it == ckpt.params.end()) {
      throw std::runtime_error("checkpoint: missing parameter " + prefix + "/" +
                               path);
    }
    Tensor& t = store.at(path);
    if (it->second.shape != t.shape()) {
      throw std::runtime_error(
          "checkpoint: shape mismatch for " + prefix + "/" + path + ": file " +
          shape_str(it->second.shape) + " vs model " + shape_str(t.shape()));
    }
    auto dst = t.raw_values();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

void pack_adam(CheckpointData& ckpt, const std::string& name, const Adam& opt) {
  CheckpointData::OptState st;
  st.step_count = opt.step_count();
  st.m = const_cast<Adam&>(opt).first_moments();
  st.v = const_cast<Adam&>(opt).second_moments();
  ckpt.optimizers[name] = std::move(st);
}

void unpack_adam(const CheckpointData& ckpt, const std::string& name,
                 Adam& opt) {
  auto it = ckpt.optimizers.find(name);
  if (it == ckpt.optimizers.end()) {
    throw std::runtime_error("checkpoint: missing optimizer state " + name);
  }
  opt.restore(it->second.step_count, it->second.m, it->second.v);
}

}  // namespace tpc
