#include "tpc/behavior.hpp"

#include <cmath>

namespace tpc {

std::vector<double> lambda_return(const std::vector<double>& rewards,
                                  const std::vector<double>& values,
                                  double gamma, double lambda) {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("lambda_return: gamma and lambda must be in [0, 1]");
  }
  if (values.size() != rewards.size() + 1) {
    throw ContractError("lambda_return: need H rewards and H+1 values");
  }
  size_t H = rewards.size();
  std::vector<double> out(H);
  double next = values[H];
  for (size_t i = H; i-- > 0;) {
    next = rewards[i] +
           gamma * ((1.0 - lambda) * values[i + 1] + lambda * next);
    out[i] = next;
  }
  return out;
}

std::vector<Tensor> lambda_return(const std::vector<Tensor>& rewards,
                                  const std::vector<Tensor>& values,
                                  double gamma, double lambda) {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("lambda_return: gamma and lambda must be in [0, 1]");
  }
  if (values.size() != rewards.size() + 1) {
    throw ContractError("lambda_return: need H rewards and H+1 values");
  }
  size_t H = rewards.size();
  std::vector<Tensor> out(H);
  Tensor next = values[H];
  for (size_t i = H; i-- > 0;) {
    next = add(rewards[i],
               scale(add(scale(values[i + 1], 1.0 - lambda), scale(next, lambda)),
                     gamma));
    out[i] = next;
  }
  return out;
}

Behavior::Behavior(const BehaviorConfig& cfg, int feature_dim, int action_dim,
                   Rng& init_rng)
    : cfg_(cfg),
      action_dim_(action_dim),
      pol1_(policy_store_, "policy/l1", feature_dim, cfg.hidden, init_rng),
      pol2_(policy_store_, "policy/l2", cfg.hidden, cfg.hidden, init_rng),
      pol_out_(policy_store_, "policy/out", cfg.hidden, 2 * action_dim,
               init_rng),
      val1_(value_store_, "value/l1", feature_dim, cfg.hidden, init_rng),
      val2_(value_store_, "value/l2", cfg.hidden, cfg.hidden, init_rng),
      val_out_(value_store_, "value/out", cfg.hidden, 1, init_rng),
      tgt1_(target_store_, "value/l1", feature_dim, cfg.hidden, init_rng),
      tgt2_(target_store_, "value/l2", cfg.hidden, cfg.hidden, init_rng),
      tgt_out_(target_store_, "value/out", cfg.hidden, 1, init_rng) {
  target_store_.copy_values_from(value_store_);
  target_store_.set_requires_grad(false);
}

SquashedGaussian Behavior::policy_dist(const Tensor& h, const Tensor& s) const {
  return policy_dist_feat(concat({h, s}, 1));
}

SquashedGaussian Behavior::policy_dist_feat(const Tensor& feat) const {
  Tensor x = elu(pol1_(feat));
  x = elu(pol2_(x));
  Tensor out = pol_out_(x);
  Tensor raw_mean = slice(out, 1, 0, action_dim_);
  Tensor raw_std = slice(out, 1, action_dim_, action_dim_);
  SquashedGaussian d;
  d.mean = scale(tanh(scale(raw_mean, 1.0 / cfg_.mean_scale)), cfg_.mean_scale);
  double raw_init = std::log(std::exp(cfg_.init_std) - 1.0);
  d.std = add_scalar(softplus(add_scalar(raw_std, raw_init)), cfg_.min_std);
  return d;
}

Tensor Behavior::value(const Tensor& feat) const {
  Tensor x = elu(val1_(feat));
  x = elu(val2_(x));
  Tensor out = val_out_(x);
  return reshape(out, {out.shape()[0]});
}

Tensor Behavior::target_value(const Tensor& feat) const {
  Tensor x = elu(tgt1_(feat));
  x = elu(tgt2_(x));
  Tensor out = tgt_out_(x);
  return reshape(out, {out.shape()[0]});
}

ImaginedTrajectory Behavior::imagine(const WorldModel& wm,
                                     const Tensor& start_h,
                                     const Tensor& start_s, int horizon,
                                     Rng& rng, bool sample) const {
  if (horizon < 1) throw ContractError("imagine: horizon must be >= 1");
  ImaginedTrajectory traj;
  traj.h.push_back(start_h.detach());
  traj.s.push_back(start_s.detach());
  for (int t = 0; t < horizon; ++t) {
    SquashedGaussian pi = policy_dist(traj.h[t], traj.s[t]);
    Tensor action = sample ? tanh(pi.rsample_pre_tanh(rng)) : pi.mode();
    traj.actions.push_back(action);
    Tensor h_next = wm.rssm_step(traj.h[t], traj.s[t], action);
    DiagGaussian pd = wm.prior(h_next);
    traj.h.push_back(h_next);
    traj.s.push_back(sample ? pd.rsample(rng) : pd.mean);
    traj.rewards.push_back(wm.reward_mean(traj.s[t]));
  }
  for (int t = 0; t <= horizon; ++t) {
    traj.values.push_back(target_value(concat({traj.h[t], traj.s[t]}, 1)));
  }
  traj.lambda_returns =
      lambda_return(traj.rewards, traj.values, cfg_.gamma, cfg_.lambda);
  return traj;
}

Tensor Behavior::actor_loss(const ImaginedTrajectory& traj) const {
  Tensor total = traj.values.back();  // V_lambda at the terminal state
  for (const Tensor& v : traj.lambda_returns) total = add(total, v);
  return neg(mean(total));
}

Tensor Behavior::value_loss(const ImaginedTrajectory& traj) const {
  std::vector<Tensor> terms;
  size_t H = traj.lambda_returns.size();
  for (size_t t = 0; t <= H; ++t) {
    Tensor feat = concat({traj.h[t].detach(), traj.s[t].detach()}, 1);
    Tensor pred = value(feat);
    Tensor target =
        (t < H ? traj.lambda_returns[t] : traj.values[H]).detach();
    terms.push_back(scale(square(sub(pred, target)), 0.5));
  }
  return mean(concat(terms, 0));
}

void Behavior::update_target(int64_t step_count, int every) {
  if (every < 1) throw ContractError("update_target: every must be >= 1");
  if (step_count % every == 0) {
    target_store_.copy_values_from(value_store_);
  }
}

}  // namespace tpc
