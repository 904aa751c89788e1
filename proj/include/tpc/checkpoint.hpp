#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpc/nn.hpp"
#include "tpc/optim.hpp"

namespace tpc {

// Single-file JSON checkpoint: a flat map from parameter path strings to
// (shape, row-major values), plus optimizer sections and scalar metadata.
struct CheckpointData {
  static constexpr int kFormatVersion = 1;

  struct Param {
    Shape shape;
    std::vector<double> values;
  };
  struct OptState {
    int64_t step_count = 0;
    std::vector<std::vector<double>> m, v;  // aligned with the param group
  };

  std::map<std::string, Param> params;
  std::map<std::string, OptState> optimizers;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);  // validates version

// ParamStore <-> checkpoint section under a path prefix ("world/...").
void pack_store(CheckpointData& ckpt, const std::string& prefix,
                const ParamStore& store);
// Throws on missing parameters or shape mismatches.
void unpack_store(const CheckpointData& ckpt, const std::string& prefix,
                  ParamStore& store);

void pack_adam(CheckpointData& ckpt, const std::string& name, const Adam& opt);
void unpack_adam(const CheckpointData& ckpt, const std::string& name, Adam& opt);

}  // namespace tpc
