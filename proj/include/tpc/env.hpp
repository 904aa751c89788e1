#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tpc/rng.hpp"

namespace tpc {

enum class Task { pendulum_lite, pointmass_lite };
enum class BackgroundKind { clean, random_per_step, scripted_motion, frame_dir };

Task task_from_string(const std::string& s);
BackgroundKind background_kind_from_string(const std::string& s);
std::string to_string(Task t);
std::string to_string(BackgroundKind k);

struct BackgroundConfig {
  BackgroundKind kind = BackgroundKind::clean;
  double clean_level = -0.3;
  double noise_lo = -0.5, noise_hi = 0.15;  // per-tile brightness range
  int tile = 4;                             // noise tile edge, pixels
  std::string frame_root;                   // <root>/<split>/<clip>/*.pgm
  bool eval_split = false;
};

struct EnvConfig {
  Task task = Task::pendulum_lite;
  int image_size = 16;
  int action_repeat = 2;
  int episode_length = 1000;  // environment steps; divisible by action_repeat
  BackgroundConfig background;
};

struct StepResult {
  std::vector<double> obs;  // image_size^2 values in [-0.5, 0.5]
  double reward = 0.0;
  bool done = false;
  std::vector<double> state;  // ground truth, see state_dim()
};

// Nuisance-background generator. One frame per environment step.
class BackgroundSource {
 public:
  BackgroundSource() = default;
  BackgroundSource(const BackgroundConfig& cfg, int image_size);
  void reset(Rng& rng);               // new episode
  std::vector<double> next(Rng& rng); // frame for the next env step
  int clip_count() const;
  // Deterministic frame for the scripted kind, exposed for tests.
  static std::vector<double> scripted_frame(int image_size, int t);

 private:
  BackgroundConfig cfg_;
  int size_ = 0;
  int t_ = 0;
  struct Clip {
    std::string dir;
    std::vector<std::vector<float>> frames;
  };
  std::shared_ptr<std::vector<Clip>> clips_;
  int clip_idx_ = 0;
  int frame_idx_ = 0;
};

// Deterministic, seedable toy pixel control task.
class Env {
 public:
  Env(const EnvConfig& cfg, uint64_t seed);

  // Starts a fresh episode. The explicit form is bit-deterministic in
  // (config, episode_seed); the no-argument form advances an internal episode
  // counter derived from the construction seed.
  std::vector<double> reset(uint64_t episode_seed);
  std::vector<double> reset();
  StepResult step(const std::vector<double>& action);

  int action_dim() const;
  int obs_dim() const { return cfg_.image_size * cfg_.image_size; }
  int decisions_per_episode() const {
    return cfg_.episode_length / cfg_.action_repeat;
  }
  bool done() const { return env_step_ >= cfg_.episode_length; }
  std::vector<double> ground_truth() const { return state_; }
  std::vector<double> render() const;
  const std::vector<double>& background() const { return bg_frame_; }
  const EnvConfig& config() const { return cfg_; }

  static int state_dim(Task task);
  static int action_dim(Task task);
  // Agent sprite coverage for a ground-truth state (goal markers excluded).
  static std::vector<uint8_t> agent_mask(const EnvConfig& cfg,
                                         const std::vector<double>& state);
  // Per-environment-step reward at a state.
  static double reward_at(Task task, const std::vector<double>& state);

 private:
  void integrate(const std::vector<double>& action);
  void init_state();

  EnvConfig cfg_;
  uint64_t seed_;
  uint64_t episode_ = 0;
  Rng rng_{0};
  BackgroundSource bg_;
  std::vector<double> state_;
  std::vector<double> bg_frame_;
  int env_step_ = 0;
};

// Appends per-step records "t,action...,reward,state..." with a header line.
void write_episode_csv(const std::string& path,
                       const std::vector<std::vector<double>>& actions,
                       const std::vector<double>& rewards,
                       const std::vector<std::vector<double>>& states);

}  // namespace tpc
