#pragma once

#include <vector>

#include "tpc/rng.hpp"
#include "tpc/world_model.hpp"

namespace tpc {

// One collected episode. obs[i] pairs with rewards[i] (the reward that
// arrived together with that observation; 0 for the reset observation) and
// states[i]; actions[i] led from obs[i] to obs[i+1].
struct Episode {
  int obs_dim = 0, action_dim = 0, state_dim = 0;
  std::vector<float> obs;      // (n+1) * obs_dim
  std::vector<float> actions;  // n * action_dim
  std::vector<float> rewards;  // n+1, rewards[0] == 0
  std::vector<float> states;   // (n+1) * state_dim
  int length() const {  // number of observations
    return obs_dim ? static_cast<int>(obs.size()) / obs_dim : 0;
  }
  double total_reward() const {
    double r = 0;
    for (float x : rewards) r += x;
    return r;
  }
};

// Episode storage with contiguous in-episode chunk sampling.
class SequenceReplayBuffer {
 public:
  // capacity 0 = unbounded; otherwise oldest episodes are dropped.
  explicit SequenceReplayBuffer(int capacity_episodes = 0)
      : capacity_(capacity_episodes) {}

  void add(Episode ep);
  int episodes() const { return static_cast<int>(episodes_.size()); }
  int64_t total_steps() const { return total_steps_; }
  const Episode& episode(int i) const { return episodes_[i]; }

  // B chunks of T consecutive observations, never straddling episodes.
  TrajectoryBatch sample(int batch, int horizon, Rng& rng) const;

 private:
  int capacity_;
  std::vector<Episode> episodes_;
  int64_t total_steps_ = 0;
};

}  // namespace tpc
