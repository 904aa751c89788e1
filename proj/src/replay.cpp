#include "tpc/replay.hpp"

namespace tpc {

void SequenceReplayBuffer::add(Episode ep) {
  if (ep.length() < 2) throw ContractError("replay: episode too short");
  total_steps_ += ep.length() - 1;
  episodes_.push_back(std::move(ep));
  if (capacity_ > 0 && static_cast<int>(episodes_.size()) > capacity_) {
    total_steps_ -= episodes_.front().length() - 1;
    episodes_.erase(episodes_.begin());
  }
}

TrajectoryBatch SequenceReplayBuffer::sample(int batch, int horizon,
                                             Rng& rng) const {
  if (episodes_.empty()) throw ContractError("replay: buffer empty");
  if (batch < 1 || horizon < 2) {
    throw ContractError("replay: need batch >= 1 and chunk length >= 2");
  }
  int p = episodes_.front().obs_dim;
  int a = episodes_.front().action_dim;

  std::vector<double> obs(static_cast<size_t>(batch) * horizon * p);
  std::vector<double> actions(static_cast<size_t>(batch) * (horizon - 1) * a);
  std::vector<double> rewards(static_cast<size_t>(batch) * horizon);

  for (int bi = 0; bi < batch; ++bi) {
    // rejection-free: pick among episodes long enough for the chunk
    int tries = 0;
    const Episode* ep = nullptr;
    while (true) {
      const Episode& cand = episodes_[rng.uniform_int(0, episodes() - 1)];
      if (cand.length() >= horizon) {
        ep = &cand;
        break;
      }
      if (++tries > 1000) {
        throw ContractError("replay: no episode long enough for chunk length " +
                            std::to_string(horizon));
      }
    }
    int start = rng.uniform_int(0, ep->length() - horizon);
    for (int t = 0; t < horizon; ++t) {
      const float* src = ep->obs.data() + static_cast<size_t>(start + t) * p;
      double* dst = obs.data() + (static_cast<size_t>(bi) * horizon + t) * p;
      for (int i = 0; i < p; ++i) dst[i] = src[i];
      rewards[static_cast<size_t>(bi) * horizon + t] = ep->rewards[start + t];
    }
    for (int t = 0; t < horizon - 1; ++t) {
      const float* src = ep->actions.data() + static_cast<size_t>(start + t) * a;
      double* dst =
          actions.data() + (static_cast<size_t>(bi) * (horizon - 1) + t) * a;
      for (int i = 0; i < a; ++i) dst[i] = src[i];
    }
  }

  TrajectoryBatch out;
  out.batch = batch;
  out.horizon = horizon;
  out.obs = Tensor::from_values({batch, horizon, p}, std::move(obs));
  out.actions =
      Tensor::from_values({batch, horizon - 1, a}, std::move(actions));
  out.rewards = Tensor::from_values({batch, horizon}, std::move(rewards));
  return out;
}

}  // namespace tpc
