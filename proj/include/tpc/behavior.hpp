#pragma once

#include <vector>

#include "tpc/distributions.hpp"
#include "tpc/nn.hpp"
#include "tpc/world_model.hpp"

namespace tpc {

struct BehaviorConfig {
  int hidden = 64;
  double mean_scale = 5.0;
  double init_std = 5.0;
  double min_std = 1e-4;
  int horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  int target_update_every = 100;
};

// H-step rollout through the learned dynamics and policy. Entirely
// model-generated; no environment access.
struct ImaginedTrajectory {
  std::vector<Tensor> h, s;            // H+1 states
  std::vector<Tensor> actions;         // H
  std::vector<Tensor> rewards;         // H, reward-head means
  std::vector<Tensor> values;          // H+1, target network
  std::vector<Tensor> lambda_returns;  // H
};

// Truncated lambda-return by backward recursion. rewards has H entries,
// values H+1 (the last bootstraps the tail); returns H entries.
std::vector<double> lambda_return(const std::vector<double>& rewards,
                                  const std::vector<double>& values,
                                  double gamma, double lambda);
std::vector<Tensor> lambda_return(const std::vector<Tensor>& rewards,
                                  const std::vector<Tensor>& values,
                                  double gamma, double lambda);

class Behavior {
 public:
  Behavior(const BehaviorConfig& cfg, int feature_dim, int action_dim,
           Rng& init_rng);

  // Policy over the concatenated model state (h, s).
  SquashedGaussian policy_dist(const Tensor& h, const Tensor& s) const;
  SquashedGaussian policy_dist_feat(const Tensor& feat) const;

  Tensor value(const Tensor& feat) const;         // {N, F} -> {N}
  Tensor target_value(const Tensor& feat) const;  // frozen copy

  // Rollout from detached start states. sample=false makes the rollout a
  // deterministic function of the start (mode actions, prior means).
  ImaginedTrajectory imagine(const WorldModel& wm, const Tensor& start_h,
                             const Tensor& start_s, int horizon, Rng& rng,
                             bool sample = true) const;

  // -E[ sum_tau V_lambda(s_tau) ], the sum running over all H+1 states with
  // the terminal state contributing its bootstrap value.
  Tensor actor_loss(const ImaginedTrajectory& traj) const;
  // Mean squared regression of the value net onto detached lambda-returns,
  // with states detached so no gradient reaches dynamics or policy.
  Tensor value_loss(const ImaginedTrajectory& traj) const;

  // Hard copy value -> target whenever step_count is a multiple of `every`.
  void update_target(int64_t step_count, int every);

  ParamStore& policy_params() { return policy_store_; }
  ParamStore& value_params() { return value_store_; }
  ParamStore& target_params() { return target_store_; }
  const ParamStore& policy_params() const { return policy_store_; }
  const ParamStore& value_params() const { return value_store_; }
  const ParamStore& target_params() const { return target_store_; }
  const BehaviorConfig& config() const { return cfg_; }

 private:
  BehaviorConfig cfg_;
  int action_dim_;
  ParamStore policy_store_, value_store_, target_store_;
  Dense pol1_, pol2_, pol_out_;
  Dense val1_, val2_, val_out_;
  Dense tgt1_, tgt2_, tgt_out_;
};

}  // namespace tpc
