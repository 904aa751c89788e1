#include "tpc/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "tpc/image.hpp"
#include "tpc/tensor.hpp"

namespace fs = std::filesystem;

namespace tpc {

namespace {

constexpr double kDt = 0.05;
constexpr double kAgentBrightness = 0.5;
constexpr double kGoalBrightness = 0.2;

// pendulum constants: mass 1, length 1
constexpr double kGravity = 9.8;
constexpr double kTorqueGain = 2.0;
constexpr double kPendulumDamping = 0.05;
constexpr double kMaxAngVel = 8.0;

// pointmass constants
constexpr double kForceGain = 1.0;
constexpr double kDrag = 0.1;
constexpr double kMaxVel = 2.0;

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

double clampd(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

double dist_point_segment(double px, double py, double x0, double y0, double x1,
                          double y1) {
  double dx = x1 - x0, dy = y1 - y0;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = clampd(t, 0.0, 1.0);
  double cx = x0 + t * dx, cy = y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

}  // namespace

Task task_from_string(const std::string& s) {
  if (s == "pendulum_lite") return Task::pendulum_lite;
  if (s == "pointmass_lite") return Task::pointmass_lite;
  throw ContractError("unknown task: " + s);
}

BackgroundKind background_kind_from_string(const std::string& s) {
  if (s == "clean") return BackgroundKind::clean;
  if (s == "random_per_step") return BackgroundKind::random_per_step;
  if (s == "scripted_motion") return BackgroundKind::scripted_motion;
  if (s == "frame_dir") return BackgroundKind::frame_dir;
  throw ContractError("unknown background kind: " + s);
}

std::string to_string(Task t) {
  return t == Task::pendulum_lite ? "pendulum_lite" : "pointmass_lite";
}

std::string to_string(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::clean: return "clean";
    case BackgroundKind::random_per_step: return "random_per_step";
    case BackgroundKind::scripted_motion: return "scripted_motion";
    case BackgroundKind::frame_dir: return "frame_dir";
  }
  return "?";
}

// ---- backgrounds ------------------------------------------------------------

BackgroundSource::BackgroundSource(const BackgroundConfig& cfg, int image_size)
    : cfg_(cfg), size_(image_size) {
  if (cfg_.kind != BackgroundKind::frame_dir) return;

  std::string split = cfg_.eval_split ? "eval" : "train";
  fs::path root = fs::path(cfg_.frame_root) / split;
  if (!fs::is_directory(root)) {
    throw std::runtime_error("frame_dir: missing split directory " +
                             root.string());
  }
  clips_ = std::make_shared<std::vector<Clip>>();
  std::vector<fs::path> clip_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) clip_dirs.push_back(e.path());
  }
  std::sort(clip_dirs.begin(), clip_dirs.end());
  for (const auto& dir : clip_dirs) {
    Clip clip;
    clip.dir = dir.string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      GrayImage img = resize_nearest(center_crop_square(read_pgm(f.string())),
                                     size_);
      std::vector<float> frame(img.pixels.size());
      double lo = cfg_.noise_lo, hi = cfg_.noise_hi;
      for (size_t i = 0; i < frame.size(); ++i) {
        frame[i] = static_cast<float>(lo + (hi - lo) * img.pixels[i] / 255.0);
      }
      clip.frames.push_back(std::move(frame));
    }
    if (!clip.frames.empty()) clips_->push_back(std::move(clip));
  }
  if (clips_->empty()) {
    throw std::runtime_error("frame_dir: no clips with .pgm frames under " +
                             root.string());
  }
}

int BackgroundSource::clip_count() const {
  return clips_ ? static_cast<int>(clips_->size()) : 0;
}

void BackgroundSource::reset(Rng& rng) {
  t_ = 0;
  frame_idx_ = 0;
  if (cfg_.kind == BackgroundKind::frame_dir) {
    clip_idx_ = rng.uniform_int(0, static_cast<int>(clips_->size()) - 1);
  }
}

std::vector<double> BackgroundSource::scripted_frame(int image_size, int t) {
  std::vector<double> frame(static_cast<size_t>(image_size) * image_size);
  int period = image_size;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      int phase = (x + y + t) % period;
      frame[static_cast<size_t>(y) * image_size + x] =
          phase < period / 2 ? 0.1 : -0.45;
    }
  }
  return frame;
}

std::vector<double> BackgroundSource::next(Rng& rng) {
  size_t n = static_cast<size_t>(size_) * size_;
  std::vector<double> frame(n, cfg_.clean_level);
  switch (cfg_.kind) {
    case BackgroundKind::clean:
      break;
    case BackgroundKind::random_per_step: {
      int tiles = (size_ + cfg_.tile - 1) / cfg_.tile;
      std::vector<double> tv(static_cast<size_t>(tiles) * tiles);
      for (double& v : tv) v = rng.uniform(cfg_.noise_lo, cfg_.noise_hi);
      for (int y = 0; y < size_; ++y) {
        for (int x = 0; x < size_; ++x) {
          frame[static_cast<size_t>(y) * size_ + x] =
              tv[static_cast<size_t>(y / cfg_.tile) * tiles + x / cfg_.tile];
        }
      }
      break;
    }
    case BackgroundKind::scripted_motion:
      frame = scripted_frame(size_, t_);
      break;
    case BackgroundKind::frame_dir: {
      const Clip& clip = (*clips_)[clip_idx_];
      const auto& f = clip.frames[frame_idx_ % clip.frames.size()];  // wrap
      for (size_t i = 0; i < n; ++i) frame[i] = f[i];
      ++frame_idx_;
      break;
    }
  }
  ++t_;
  return frame;
}

// ---- env --------------------------------------------------------------------

int Env::state_dim(Task task) {
  return task == Task::pendulum_lite ? 2 : 6;
}

int Env::action_dim(Task task) {
  return task == Task::pendulum_lite ? 1 : 2;
}

int Env::action_dim() const { return action_dim(cfg_.task); }

Env::Env(const EnvConfig& cfg, uint64_t seed)
    : cfg_(cfg), seed_(seed), bg_(cfg.background, cfg.image_size) {
  if (cfg_.action_repeat < 1) throw ContractError("env: action_repeat < 1");
  if (cfg_.episode_length % cfg_.action_repeat != 0) {
    throw ContractError("env: episode_length not divisible by action_repeat");
  }
}

void Env::init_state() {
  if (cfg_.task == Task::pendulum_lite) {
    double theta = wrap_angle(M_PI + rng_.uniform(-0.1, 0.1));
    state_ = {theta, 0.0};
  } else {
    double x = rng_.uniform(-0.8, 0.8);
    double y = rng_.uniform(-0.8, 0.8);
    double gx, gy;
    do {
      gx = rng_.uniform(-0.6, 0.6);
      gy = rng_.uniform(-0.6, 0.6);
    } while (std::hypot(gx - x, gy - y) < 0.3);
    state_ = {x, y, 0.0, 0.0, gx, gy};
  }
}

std::vector<double> Env::reset(uint64_t episode_seed) {
  rng_ = Rng(episode_seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  env_step_ = 0;
  init_state();
  bg_.reset(rng_);
  bg_frame_ = bg_.next(rng_);
  return render();
}

std::vector<double> Env::reset() {
  return reset(seed_ + 0x51'7cc1b727220a95ull * ++episode_);
}

void Env::integrate(const std::vector<double>& action) {
  if (cfg_.task == Task::pendulum_lite) {
    double a = clampd(action[0], -1.0, 1.0);
    double theta = state_[0], omega = state_[1];
    double acc = kGravity * std::sin(theta) + kTorqueGain * a -
                 kPendulumDamping * omega;
    omega = clampd(omega + kDt * acc, -kMaxAngVel, kMaxAngVel);
    theta = wrap_angle(theta + kDt * omega);
    state_[0] = theta;
    state_[1] = omega;
  } else {
    double ax = clampd(action[0], -1.0, 1.0);
    double ay = clampd(action[1], -1.0, 1.0);
    for (int i = 0; i < 2; ++i) {
      double a = (i == 0 ? ax : ay) * kForceGain - kDrag * state_[2 + i];
      double v = clampd(state_[2 + i] + kDt * a, -kMaxVel, kMaxVel);
      double p = state_[i] + kDt * v;
      if (p < -1.0 || p > 1.0) {
        p = clampd(p, -1.0, 1.0);
        v = 0.0;  // sticky walls
      }
      state_[i] = p;
      state_[2 + i] = v;
    }
  }
}

double Env::reward_at(Task task, const std::vector<double>& state) {
  if (task == Task::pendulum_lite) return std::cos(state[0]);
  double d = std::hypot(state[0] - state[4], state[1] - state[5]);
  return 1.0 - std::tanh(4.0 * d);
}

StepResult Env::step(const std::vector<double>& action) {
  if (static_cast<int>(action.size()) != action_dim()) {
    throw ShapeError("env.step: expected " + std::to_string(action_dim()) +
                     " action values");
  }
  if (done()) throw ContractError("env.step: episode finished, call reset");
  StepResult r;
  for (int i = 0; i < cfg_.action_repeat; ++i) {
    integrate(action);
    ++env_step_;
    bg_frame_ = bg_.next(rng_);
    r.reward += reward_at(cfg_.task, state_);
  }
  r.obs = render();
  r.state = state_;
  r.done = done();
  return r;
}

std::vector<uint8_t> Env::agent_mask(const EnvConfig& cfg,
                                     const std::vector<double>& state) {
  int n = cfg.image_size;
  std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
  if (cfg.task == Task::pendulum_lite) {
    double c = (n - 1) / 2.0;
    double r = 0.40 * n;
    double ex = c + r * std::sin(state[0]);
    double ey = c - r * std::cos(state[0]);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (dist_point_segment(x, y, c, c, ex, ey) <= 0.6) {
          mask[static_cast<size_t>(y) * n + x] = 1;
        }
      }
    }
  } else {
    double px = (state[0] + 1.0) / 2.0 * (n - 1);
    double py = (1.0 - state[1]) / 2.0 * (n - 1);
    double radius = std::max(1.2, 0.07 * n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (std::hypot(x - px, y - py) <= radius) {
          mask[static_cast<size_t>(y) * n + x] = 1;
        }
      }
    }
  }
  return mask;
}

std::vector<double> Env::render() const {
  int n = cfg_.image_size;
  std::vector<double> img = bg_frame_;
  if (cfg_.task == Task::pointmass_lite) {
    double gx = (state_[4] + 1.0) / 2.0 * (n - 1);
    double gy = (1.0 - state_[5]) / 2.0 * (n - 1);
    double gr = std::max(0.9, 0.05 * n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (std::hypot(x - gx, y - gy) <= gr) {
          img[static_cast<size_t>(y) * n + x] = kGoalBrightness;
        }
      }
    }
  }
  std::vector<uint8_t> mask = agent_mask(cfg_, state_);
  for (size_t i = 0; i < img.size(); ++i) {
    if (mask[i]) img[i] = kAgentBrightness;
  }
  return img;
}

void write_episode_csv(const std::string& path,
                       const std::vector<std::vector<double>>& actions,
                       const std::vector<double>& rewards,
                       const std::vector<std::vector<double>>& states) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  size_t adim = actions.empty() ? 0 : actions[0].size();
  size_t sdim = states.empty() ? 0 : states[0].size();
  out << "t";
  for (size_t i = 0; i < adim; ++i) out << ",action" << i;
  out << ",reward";
  for (size_t i = 0; i < sdim; ++i) out << ",state" << i;
  out << "\n";
  char buf[64];
  for (size_t t = 0; t < actions.size(); ++t) {
    out << t;
    for (size_t i = 0; i < adim; ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", actions[t][i]);
      out << "," << buf;
    }
    std::snprintf(buf, sizeof buf, "%.10g", rewards[t]);
    out << "," << buf;
    for (size_t i = 0; i < sdim; ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", states[t][i]);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace tpc
