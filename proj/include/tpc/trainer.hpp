#pragma once

#include <memory>
#include <optional>
#include <string>

#include "tpc/behavior.hpp"
#include "tpc/checkpoint.hpp"
#include "tpc/config.hpp"
#include "tpc/env.hpp"
#include "tpc/metrics.hpp"
#include "tpc/optim.hpp"
#include "tpc/replay.hpp"
#include "tpc/world_model.hpp"

namespace tpc {

struct TrainConfig {
  uint64_t seed = 1;
  EnvConfig env;

  // world model dims (paper_scale flips to the reference 30/200 sizes)
  bool paper_scale = false;
  int latent_dim = 10;
  int hidden_dim = 40;
  int encoder_hidden = 128;
  int prior_hidden = 64;
  int reward_hidden = 64;
  int rssm_embed = 32;

  LossWeights weights;
  BehaviorConfig behavior;

  double wm_lr = 6e-4;
  double behavior_lr = 8e-5;
  double clip_norm = 100.0;

  int batch_size = 32;       // B
  int chunk_length = 20;     // T
  int updates_per_iteration = 100;  // G per collected episode
  int seed_episodes = 5;     // S
  int64_t total_env_steps = 50000;
  double exploration_noise = 0.3;
  int eval_every = 5;        // iterations; 0 disables
  int eval_episodes = 2;
  int checkpoint_every = 0;  // iterations; 0 = final only
  int buffer_capacity = 0;   // episodes; 0 = unbounded

  // ablation switches; the three named variants are mutually exclusive
  std::string variant = "full_tpc";  // full_tpc | spc_only | unstable_tpc
  bool no_smoothing = false;
  bool separate_reward = false;

  static TrainConfig from_config(const Config& c);
  Config to_config() const;
  // All recognized dotted paths; anything else in a config is rejected.
  static const std::vector<std::string>& known_keys();

  WorldModelConfig world_model_config() const;
  // Variant weighting: spc_only zeroes lambda_1, unstable_tpc zeroes lambda_3.
  LossWeights effective_weights() const;
};

// Models plus their optimizers; shared by training and the eval/probe CLIs.
struct Agent {
  Agent(const TrainConfig& cfg, Rng& init_rng);

  TrainConfig cfg;
  WorldModel wm;
  Behavior behavior;
  Adam wm_opt, actor_opt, value_opt;

  void save(const std::string& path,
            std::map<std::string, std::string> meta = {}) const;
  void load(const std::string& path);
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, MetricsWriter* metrics = nullptr);

  void seed_dataset();
  // Mode action + exploration noise through one full episode.
  double collect_episode(double noise_std);
  // G gradient updates then one collected episode.
  void train_iteration();
  // Full schedule: seed, iterate until the env-step budget, checkpoints.
  void run(const std::string& run_dir);

  std::vector<double> evaluate(int episodes);

  Agent& agent() { return agent_; }
  SequenceReplayBuffer& buffer() { return buffer_; }
  int64_t env_steps() const { return env_steps_; }
  int64_t gradient_steps() const { return grad_steps_; }
  int64_t iterations() const { return iterations_; }
  double min_latent_std() const { return min_latent_std_; }
  double last_eval_return() const { return last_eval_return_; }
  double best_eval_return() const { return best_eval_return_; }

  // One gradient update on a given batch; exposed for tests and probes.
  WorldModelLosses update_once(const TrajectoryBatch& batch);

  static std::vector<std::string> metric_columns();

 private:
  void record(const std::string& kind, const MetricsWriter::Fields& fields);

  TrainConfig cfg_;
  MetricsWriter* metrics_;
  Rng init_rng_, train_rng_, collect_rng_, eval_rng_;
  Agent agent_;
  Env env_, eval_env_;
  SequenceReplayBuffer buffer_;
  int64_t env_steps_ = 0;
  int64_t grad_steps_ = 0;
  int64_t iterations_ = 0;
  uint64_t collect_episode_idx_ = 0;
  uint64_t eval_episode_idx_ = 0;
  double min_latent_std_ = 1e18;
  double last_eval_return_ = 0.0;
  double best_eval_return_ = -1e18;
};

}  // namespace tpc
