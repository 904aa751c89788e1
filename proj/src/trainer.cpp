#include "tpc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

namespace fs = std::filesystem;

namespace tpc {

namespace {
constexpr uint64_t kStream = 0x9e3779b97f4a7c15ull;
constexpr double kActionLimit = 1.0 - 1e-6;
}  // namespace

TrainConfig TrainConfig::from_config(const Config& c) {
  // reject unknown keys up front, listing them
  std::set<std::string> known(known_keys().begin(), known_keys().end());
  std::string bad;
  for (const auto& p : c.paths()) {
    if (!known.count(p)) bad += (bad.empty() ? "" : ", ") + p;
  }
  if (!bad.empty()) {
    throw std::runtime_error("config: unknown keys: " + bad);
  }

  TrainConfig t;
  t.seed = static_cast<uint64_t>(c.get_int("seed", 1));

  t.env.task = task_from_string(c.get_string("env.task", "pendulum_lite"));
  t.env.image_size = static_cast<int>(c.get_int("env.image_size", 16));
  t.env.action_repeat = static_cast<int>(c.get_int("env.action_repeat", 2));
  t.env.episode_length =
      static_cast<int>(c.get_int("env.episode_length", 1000));
  t.env.background.kind = background_kind_from_string(
      c.get_string("env.background.kind", "clean"));
  t.env.background.clean_level =
      c.get_double("env.background.clean_level", -0.3);
  t.env.background.noise_lo = c.get_double("env.background.noise_lo", -0.5);
  t.env.background.noise_hi = c.get_double("env.background.noise_hi", 0.15);
  t.env.background.tile = static_cast<int>(c.get_int("env.background.tile", 4));
  t.env.background.frame_root =
      c.get_string("env.background.frame_root", "");

  t.paper_scale = c.get_bool("model.paper_scale", false);
  t.latent_dim =
      static_cast<int>(c.get_int("model.latent_dim", t.paper_scale ? 30 : 10));
  t.hidden_dim =
      static_cast<int>(c.get_int("model.hidden_dim", t.paper_scale ? 200 : 40));
  t.encoder_hidden = static_cast<int>(
      c.get_int("model.encoder_hidden", t.paper_scale ? 256 : 128));
  t.prior_hidden = static_cast<int>(
      c.get_int("model.prior_hidden", t.paper_scale ? 200 : 64));
  t.reward_hidden = static_cast<int>(
      c.get_int("model.reward_hidden", t.paper_scale ? 200 : 64));
  t.rssm_embed = static_cast<int>(
      c.get_int("model.rssm_embed", t.paper_scale ? 200 : 32));

  t.weights.tpc = c.get_double("loss.lambda1", 1.0);
  t.weights.cons = c.get_double("loss.lambda2", 0.1);
  t.weights.spc = c.get_double("loss.lambda3", 1.0);
  t.weights.reward = c.get_double("loss.lambda4", 1.0);
  t.weights.sigma_spc = c.get_double("loss.sigma_spc", 0.2);
  t.weights.sigma_tpc_noise = c.get_double("loss.sigma_tpc_noise", 0.2);
  t.weights.spc_jitter = c.get_double("loss.spc_jitter", 0.01);

  t.behavior.hidden = static_cast<int>(c.get_int("behavior.hidden", 64));
  t.behavior.mean_scale = c.get_double("behavior.mean_scale", 5.0);
  t.behavior.init_std = c.get_double("behavior.init_std", 5.0);
  t.behavior.min_std = c.get_double("behavior.min_std", 1e-4);
  t.behavior.horizon = static_cast<int>(c.get_int("behavior.horizon", 15));
  t.behavior.gamma = c.get_double("behavior.gamma", 0.99);
  t.behavior.lambda = c.get_double("behavior.lambda", 0.95);
  t.behavior.target_update_every =
      static_cast<int>(c.get_int("behavior.target_update_every", 100));

  t.wm_lr = c.get_double("optim.wm_lr", 6e-4);
  t.behavior_lr = c.get_double("optim.behavior_lr", 8e-5);
  t.clip_norm = c.get_double("optim.clip_norm", 100.0);

  t.batch_size = static_cast<int>(
      c.get_int("train.batch_size", t.paper_scale ? 250 : 32));
  t.chunk_length = static_cast<int>(
      c.get_int("train.chunk_length", t.paper_scale ? 50 : 20));
  t.updates_per_iteration =
      static_cast<int>(c.get_int("train.updates_per_iteration", 100));
  t.seed_episodes = static_cast<int>(c.get_int("train.seed_episodes", 5));
  t.total_env_steps =
      c.get_int("train.total_env_steps", t.paper_scale ? 2000000 : 50000);
  t.exploration_noise = c.get_double("train.exploration_noise", 0.3);
  t.eval_every = static_cast<int>(c.get_int("train.eval_every", 5));
  t.eval_episodes = static_cast<int>(c.get_int("train.eval_episodes", 2));
  t.checkpoint_every =
      static_cast<int>(c.get_int("train.checkpoint_every", 0));
  t.buffer_capacity =
      static_cast<int>(c.get_int("train.buffer_capacity", 0));
  t.variant = c.get_string("train.variant", "full_tpc");
  if (t.variant != "full_tpc" && t.variant != "spc_only" &&
      t.variant != "unstable_tpc") {
    throw std::runtime_error("config: train.variant must be one of full_tpc, "
                             "spc_only, unstable_tpc");
  }
  t.no_smoothing = c.get_bool("train.no_smoothing", false);
  t.separate_reward = c.get_bool("train.separate_reward", false);
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  using CV = ConfigValue;
  auto iv = [](int64_t x) { CV v; v.kind = CV::Kind::Int; v.i = x; return v; };
  auto dv = [](double x) { CV v; v.kind = CV::Kind::Float; v.d = x; return v; };
  auto bv = [](bool x) { CV v; v.kind = CV::Kind::Bool; v.b = x; return v; };
  auto sv = [](std::string x) {
    CV v; v.kind = CV::Kind::String; v.s = std::move(x); return v;
  };

  c.set("seed", iv(static_cast<int64_t>(seed)));
  c.set("env.task", sv(to_string(env.task)));
  c.set("env.image_size", iv(env.image_size));
  c.set("env.action_repeat", iv(env.action_repeat));
  c.set("env.episode_length", iv(env.episode_length));
  c.set("env.background.kind", sv(to_string(env.background.kind)));
  c.set("env.background.clean_level", dv(env.background.clean_level));
  c.set("env.background.noise_lo", dv(env.background.noise_lo));
  c.set("env.background.noise_hi", dv(env.background.noise_hi));
  c.set("env.background.tile", iv(env.background.tile));
  if (!env.background.frame_root.empty()) {
    c.set("env.background.frame_root", sv(env.background.frame_root));
  }
  c.set("model.paper_scale", bv(paper_scale));
  c.set("model.latent_dim", iv(latent_dim));
  c.set("model.hidden_dim", iv(hidden_dim));
  c.set("model.encoder_hidden", iv(encoder_hidden));
  c.set("model.prior_hidden", iv(prior_hidden));
  c.set("model.reward_hidden", iv(reward_hidden));
  c.set("model.rssm_embed", iv(rssm_embed));
  c.set("loss.lambda1", dv(weights.tpc));
  c.set("loss.lambda2", dv(weights.cons));
  c.set("loss.lambda3", dv(weights.spc));
  c.set("loss.lambda4", dv(weights.reward));
  c.set("loss.sigma_spc", dv(weights.sigma_spc));
  c.set("loss.sigma_tpc_noise", dv(weights.sigma_tpc_noise));
  c.set("loss.spc_jitter", dv(weights.spc_jitter));
  c.set("behavior.hidden", iv(behavior.hidden));
  c.set("behavior.mean_scale", dv(behavior.mean_scale));
  c.set("behavior.init_std", dv(behavior.init_std));
  c.set("behavior.min_std", dv(behavior.min_std));
  c.set("behavior.horizon", iv(behavior.horizon));
  c.set("behavior.gamma", dv(behavior.gamma));
  c.set("behavior.lambda", dv(behavior.lambda));
  c.set("behavior.target_update_every", iv(behavior.target_update_every));
  c.set("optim.wm_lr", dv(wm_lr));
  c.set("optim.behavior_lr", dv(behavior_lr));
  c.set("optim.clip_norm", dv(clip_norm));
  c.set("train.batch_size", iv(batch_size));
  c.set("train.chunk_length", iv(chunk_length));
  c.set("train.updates_per_iteration", iv(updates_per_iteration));
  c.set("train.seed_episodes", iv(seed_episodes));
  c.set("train.total_env_steps", iv(total_env_steps));
  c.set("train.exploration_noise", dv(exploration_noise));
  c.set("train.eval_every", iv(eval_every));
  c.set("train.eval_episodes", iv(eval_episodes));
  c.set("train.checkpoint_every", iv(checkpoint_every));
  c.set("train.buffer_capacity", iv(buffer_capacity));
  c.set("train.variant", sv(variant));
  c.set("train.no_smoothing", bv(no_smoothing));
  c.set("train.separate_reward", bv(separate_reward));
  return c;
}

const std::vector<std::string>& TrainConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    TrainConfig defaults;
    defaults.env.background.frame_root = "x";  // so the key is enumerated
    return defaults.to_config().paths();
  }();
  return keys;
}

WorldModelConfig TrainConfig::world_model_config() const {
  WorldModelConfig w;
  w.obs_dim = env.image_size * env.image_size;
  w.action_dim = Env::action_dim(env.task);
  w.latent_dim = latent_dim;
  w.hidden_dim = hidden_dim;
  w.encoder_hidden = encoder_hidden;
  w.prior_hidden = prior_hidden;
  w.reward_hidden = reward_hidden;
  w.rssm_embed = rssm_embed;
  return w;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (variant == "spc_only") w.tpc = 0.0;
  if (variant == "unstable_tpc") w.spc = 0.0;
  return w;
}

// ---- agent -------------------------------------------------------------------

Agent::Agent(const TrainConfig& c, Rng& init_rng)
    : cfg(c),
      wm(c.world_model_config(), init_rng),
      behavior(c.behavior, c.hidden_dim + c.latent_dim,
               Env::action_dim(c.env.task), init_rng),
      wm_opt(wm.params().all(), c.wm_lr, c.clip_norm),
      actor_opt(behavior.policy_params().all(), c.behavior_lr, c.clip_norm),
      value_opt(behavior.value_params().all(), c.behavior_lr, c.clip_norm) {}

void Agent::save(const std::string& path,
                 std::map<std::string, std::string> meta) const {
  CheckpointData ckpt;
  pack_store(ckpt, "world", wm.params());
  pack_store(ckpt, "policy", behavior.policy_params());
  pack_store(ckpt, "value", behavior.value_params());
  pack_store(ckpt, "target", behavior.target_params());
  pack_adam(ckpt, "world", wm_opt);
  pack_adam(ckpt, "actor", actor_opt);
  pack_adam(ckpt, "value", value_opt);
  ckpt.meta = std::move(meta);
  ckpt.meta["latent_dim"] = std::to_string(cfg.latent_dim);
  ckpt.meta["hidden_dim"] = std::to_string(cfg.hidden_dim);
  ckpt.meta["task"] = to_string(cfg.env.task);
  save_checkpoint(path, ckpt);
}

void Agent::load(const std::string& path) {
  CheckpointData ckpt = load_checkpoint(path);
  unpack_store(ckpt, "world", wm.params());
  unpack_store(ckpt, "policy", behavior.policy_params());
  unpack_store(ckpt, "value", behavior.value_params());
  unpack_store(ckpt, "target", behavior.target_params());
  unpack_adam(ckpt, "world", wm_opt);
  unpack_adam(ckpt, "actor", actor_opt);
  unpack_adam(ckpt, "value", value_opt);
}

// ---- trainer -----------------------------------------------------------------

namespace {
EnvConfig eval_config(EnvConfig cfg) {
  cfg.background.eval_split = true;  // only affects frame_dir backgrounds
  return cfg;
}
}  // namespace

Trainer::Trainer(const TrainConfig& cfg, MetricsWriter* metrics)
    : cfg_(cfg),
      metrics_(metrics),
      init_rng_(cfg.seed * kStream + 1),
      train_rng_(cfg.seed * kStream + 2),
      collect_rng_(cfg.seed * kStream + 3),
      eval_rng_(cfg.seed * kStream + 4),
      agent_(cfg, init_rng_),
      env_(cfg.env, cfg.seed * kStream + 5),
      eval_env_(eval_config(cfg.env), cfg.seed * kStream + 6),
      buffer_(cfg.buffer_capacity) {
  if (cfg_.batch_size < 2) throw ContractError("trainer: batch_size must be >= 2");
}

void Trainer::record(const std::string& kind,
                     const MetricsWriter::Fields& fields) {
  if (metrics_) metrics_->write(kind, grad_steps_, fields);
}

void Trainer::seed_dataset() {
  if (cfg_.seed_episodes < 1) throw ContractError("seed_dataset: S must be >= 1");
  for (int i = 0; i < cfg_.seed_episodes; ++i) {
    NoGradGuard ng;
    Episode ep;
    ep.obs_dim = env_.obs_dim();
    ep.action_dim = env_.action_dim();
    ep.state_dim = Env::state_dim(cfg_.env.task);
    auto obs = env_.reset(cfg_.seed * kStream + 1000 + collect_episode_idx_++);
    ep.obs.insert(ep.obs.end(), obs.begin(), obs.end());
    ep.rewards.push_back(0.0f);
    auto st = env_.ground_truth();
    ep.states.insert(ep.states.end(), st.begin(), st.end());
    double ret = 0.0;
    while (!env_.done()) {
      std::vector<double> a(env_.action_dim());
      for (double& x : a) x = collect_rng_.uniform(-kActionLimit, kActionLimit);
      StepResult r = env_.step(a);
      ep.actions.insert(ep.actions.end(), a.begin(), a.end());
      ep.obs.insert(ep.obs.end(), r.obs.begin(), r.obs.end());
      ep.rewards.push_back(static_cast<float>(r.reward));
      ep.states.insert(ep.states.end(), r.state.begin(), r.state.end());
      ret += r.reward;
    }
    buffer_.add(std::move(ep));
    env_steps_ += cfg_.env.episode_length;
    record("episode", {{"return", ret},
                       {"env_steps", static_cast<double>(env_steps_)},
                       {"episodes", static_cast<double>(buffer_.episodes())}});
  }
}

double Trainer::collect_episode(double noise_std) {
  NoGradGuard ng;
  Episode ep;
  ep.obs_dim = env_.obs_dim();
  ep.action_dim = env_.action_dim();
  ep.state_dim = Env::state_dim(cfg_.env.task);

  auto obs = env_.reset(cfg_.seed * kStream + 1000 + collect_episode_idx_++);
  ep.obs.insert(ep.obs.end(), obs.begin(), obs.end());
  ep.rewards.push_back(0.0f);
  auto st = env_.ground_truth();
  ep.states.insert(ep.states.end(), st.begin(), st.end());

  Tensor h = Tensor::zeros({1, cfg_.hidden_dim});
  double ret = 0.0;
  while (!env_.done()) {
    Tensor o = Tensor::from_values({1, env_.obs_dim()},
                                   std::vector<double>(obs.begin(), obs.end()));
    Tensor s = agent_.wm.encode(o);
    SquashedGaussian pi = agent_.behavior.policy_dist(h, s);
    Tensor mode = pi.mode();
    std::vector<double> a(mode.values().begin(), mode.values().end());
    for (double& x : a) {
      if (noise_std > 0) x += collect_rng_.normal() * noise_std;
      x = std::min(std::max(x, -kActionLimit), kActionLimit);
    }
    StepResult r = env_.step(a);
    Tensor at = Tensor::from_values({1, env_.action_dim()}, a);
    h = agent_.wm.rssm_step(h, s, at);

    ep.actions.insert(ep.actions.end(), a.begin(), a.end());
    ep.obs.insert(ep.obs.end(), r.obs.begin(), r.obs.end());
    ep.rewards.push_back(static_cast<float>(r.reward));
    ep.states.insert(ep.states.end(), r.state.begin(), r.state.end());
    ret += r.reward;
    obs = r.obs;
  }
  buffer_.add(std::move(ep));
  env_steps_ += cfg_.env.episode_length;
  record("episode", {{"return", ret},
                     {"env_steps", static_cast<double>(env_steps_)},
                     {"episodes", static_cast<double>(buffer_.episodes())}});
  return ret;
}

WorldModelLosses Trainer::update_once(const TrajectoryBatch& batch) {
  LossWeights w = cfg_.effective_weights();

  agent_.wm.params().zero_grads();
  agent_.behavior.policy_params().zero_grads();
  agent_.behavior.value_params().zero_grads();

  WorldModelLosses losses = agent_.wm.total_loss(
      batch, w, train_rng_, !cfg_.no_smoothing, cfg_.separate_reward);
  if (!std::isfinite(losses.total.value())) {
    throw NumericError("train: non-finite world-model loss");
  }
  backward(neg(losses.total));
  double wm_norm = agent_.wm_opt.step();

  ImaginedTrajectory traj =
      agent_.behavior.imagine(agent_.wm, losses.start_h, losses.start_s,
                              cfg_.behavior.horizon, train_rng_);

  agent_.wm.params().zero_grads();
  agent_.behavior.policy_params().zero_grads();
  agent_.behavior.value_params().zero_grads();
  Tensor aloss = agent_.behavior.actor_loss(traj);
  backward(aloss);
  agent_.actor_opt.step();

  agent_.behavior.value_params().zero_grads();
  Tensor vloss = agent_.behavior.value_loss(traj);
  backward(vloss);
  agent_.value_opt.step();
  agent_.behavior.update_target(agent_.value_opt.step_count(),
                                cfg_.behavior.target_update_every);

  ++grad_steps_;
  min_latent_std_ = std::min(min_latent_std_, losses.latent_std);

  double mean_vlambda = 0.0;
  for (const Tensor& v : traj.lambda_returns) {
    for (double x : v.values()) mean_vlambda += x;
  }
  mean_vlambda /= static_cast<double>(traj.lambda_returns.size() *
                                      traj.lambda_returns[0].size());

  record("world_model", {{"tpc", losses.tpc.value()},
                         {"cons", losses.cons.value()},
                         {"spc", losses.spc.value()},
                         {"reward", losses.reward.value()},
                         {"total", losses.total.value()},
                         {"latent_std", losses.latent_std},
                         {"grad_norm", wm_norm}});
  record("behavior", {{"actor_loss", aloss.value()},
                      {"value_loss", vloss.value()},
                      {"mean_vlambda", mean_vlambda}});
  return losses;
}

void Trainer::train_iteration() {
  if (buffer_.episodes() == 0) {
    throw ContractError("train_iteration: buffer is empty; seed it first");
  }
  for (int g = 0; g < cfg_.updates_per_iteration; ++g) {
    TrajectoryBatch batch =
        buffer_.sample(cfg_.batch_size, cfg_.chunk_length, train_rng_);
    try {
      update_once(batch);
    } catch (const NumericError& e) {
      if (metrics_) metrics_->write_error(grad_steps_, e.what());
      break;  // abort this iteration's updates
    }
  }
  collect_episode(cfg_.exploration_noise);
  ++iterations_;
}

std::vector<double> Trainer::evaluate(int episodes) {
  NoGradGuard ng;
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    auto obs = eval_env_.reset(cfg_.seed * kStream + 500000 + eval_episode_idx_++);
    Tensor h = Tensor::zeros({1, cfg_.hidden_dim});
    double ret = 0.0;
    while (!eval_env_.done()) {
      Tensor o = Tensor::from_values(
          {1, eval_env_.obs_dim()}, std::vector<double>(obs.begin(), obs.end()));
      Tensor s = agent_.wm.encode(o);
      Tensor a = agent_.behavior.policy_dist(h, s).mode();
      std::vector<double> av(a.values().begin(), a.values().end());
      StepResult r = eval_env_.step(av);
      h = agent_.wm.rssm_step(h, s, a);
      ret += r.reward;
      obs = r.obs;
    }
    returns.push_back(ret);
  }
  return returns;
}

void Trainer::run(const std::string& run_dir) {
  fs::create_directories(fs::path(run_dir) / "checkpoints");
  seed_dataset();
  while (env_steps_ < cfg_.total_env_steps) {
    train_iteration();
    if (cfg_.eval_every > 0 && iterations_ % cfg_.eval_every == 0) {
      auto rets = evaluate(cfg_.eval_episodes);
      double m = 0.0;
      for (double r : rets) m += r;
      m /= rets.size();
      double sd = 0.0;
      for (double r : rets) sd += (r - m) * (r - m);
      sd = std::sqrt(sd / rets.size());
      last_eval_return_ = m;
      best_eval_return_ = std::max(best_eval_return_, m);
      record("eval", {{"eval_return", m},
                      {"eval_std", sd},
                      {"env_steps", static_cast<double>(env_steps_)}});
    }
    if (cfg_.checkpoint_every > 0 && iterations_ % cfg_.checkpoint_every == 0) {
      agent_.save((fs::path(run_dir) / "checkpoints" /
                   ("ckpt_" + std::to_string(iterations_) + ".json"))
                      .string());
    }
    if (metrics_) metrics_->flush();
  }
  agent_.save((fs::path(run_dir) / "checkpoints" / "ckpt_final.json").string());
}

std::vector<std::string> Trainer::metric_columns() {
  return {"tpc",        "cons",       "spc",          "reward",
          "total",      "latent_std", "grad_norm",    "actor_loss",
          "value_loss", "mean_vlambda", "return",     "env_steps",
          "episodes",   "eval_return", "eval_std",
          "agent_mse",  "background_mse", "r2_mean"};
}

}  // namespace tpc
