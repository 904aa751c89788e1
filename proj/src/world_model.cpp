#include "tpc/world_model.hpp"

#include <cmath>

namespace tpc {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

WorldModelConfig WorldModelConfig::paper_scale(int obs_dim, int action_dim) {
  WorldModelConfig c;
  c.obs_dim = obs_dim;
  c.action_dim = action_dim;
  c.latent_dim = 30;
  c.hidden_dim = 200;
  c.encoder_hidden = 256;
  c.prior_hidden = 200;
  c.reward_hidden = 200;
  c.rssm_embed = 200;
  return c;
}

WorldModel::WorldModel(const WorldModelConfig& cfg, Rng& init_rng)
    : cfg_(cfg),
      enc1_(store_, "encoder/l1", cfg.obs_dim, cfg.encoder_hidden, init_rng),
      enc2_(store_, "encoder/l2", cfg.encoder_hidden, cfg.encoder_hidden,
            init_rng),
      enc_out_(store_, "encoder/out", cfg.encoder_hidden, cfg.latent_dim,
               init_rng, cfg.zero_init_encoder_out),
      rssm_in_(store_, "rssm/in", cfg.latent_dim + cfg.action_dim,
               cfg.rssm_embed, init_rng),
      cell_(store_, "rssm/gru", cfg.rssm_embed, cfg.hidden_dim, init_rng),
      prior_hidden_(store_, "prior/l1", cfg.hidden_dim, cfg.prior_hidden,
                    init_rng),
      prior_out_(store_, "prior/out", cfg.prior_hidden, 2 * cfg.latent_dim,
                 init_rng),
      rew1_(store_, "reward/l1", cfg.latent_dim, cfg.reward_hidden, init_rng),
      rew2_(store_, "reward/l2", cfg.reward_hidden, cfg.reward_hidden,
            init_rng),
      rew_out_(store_, "reward/out", cfg.reward_hidden, 1, init_rng) {}

Tensor WorldModel::encode(const Tensor& obs) const {
  if (obs.ndim() != 2 || obs.shape()[1] != cfg_.obs_dim) {
    throw ShapeError("encode: expected {N," + std::to_string(cfg_.obs_dim) +
                     "}, got " + shape_str(obs.shape()));
  }
  Tensor x = elu(enc1_(obs));
  x = elu(enc2_(x));
  return enc_out_(x);
}

Tensor WorldModel::rssm_step(const Tensor& h, const Tensor& s,
                             const Tensor& a) const {
  Tensor x = elu(rssm_in_(concat({s, a}, 1)));
  return cell_.step(x, h);
}

DiagGaussian WorldModel::prior(const Tensor& h) const {
  Tensor x = elu(prior_hidden_(h));
  Tensor out = prior_out_(x);
  DiagGaussian d;
  d.mean = slice(out, 1, 0, cfg_.latent_dim);
  d.log_std = clamp(slice(out, 1, cfg_.latent_dim, cfg_.latent_dim),
                    cfg_.log_std_lo, cfg_.log_std_hi);
  return d;
}

Tensor WorldModel::reward_mean(const Tensor& s) const {
  Tensor x = elu(rew1_(s));
  x = elu(rew2_(x));
  Tensor out = rew_out_(x);
  return reshape(out, {out.shape()[0]});
}

Tensor WorldModel::smooth_inputs(const Tensor& s, const DiagGaussian& prior_dist,
                                 Rng& rng) const {
  Tensor eps = Tensor::from_values(s.shape(), rng.normal_vec(s.size()));
  return add(s, mul(exp(prior_dist.log_std), eps));
}

WorldModel::Unroll WorldModel::unroll(const std::vector<Tensor>& latents,
                                      const std::vector<Tensor>& actions,
                                      bool smoothing, Rng* rng) const {
  if (latents.empty() || actions.size() + 1 != latents.size()) {
    throw ShapeError("unroll: need T latents and T-1 actions");
  }
  if (smoothing && rng == nullptr) {
    throw ContractError("unroll: smoothing requires an rng");
  }
  int b = latents[0].shape()[0];
  size_t T = latents.size();

  Unroll u;
  u.h.reserve(T);
  u.priors.reserve(T);
  u.h.push_back(Tensor::zeros({b, cfg_.hidden_dim}));
  u.priors.push_back(prior(u.h[0]));
  for (size_t t = 0; t + 1 < T; ++t) {
    Tensor fed = smoothing ? smooth_inputs(latents[t], u.priors[t], *rng)
                           : latents[t];
    u.fed.push_back(fed);
    u.h.push_back(rssm_step(u.h[t], fed, actions[t]));
    u.priors.push_back(prior(u.h[t + 1]));
  }
  return u;
}

std::vector<Tensor> WorldModel::split_steps(const Tensor& t3) const {
  int T = t3.shape()[1];
  int b = t3.shape()[0];
  int d = t3.shape()[2];
  std::vector<Tensor> out;
  out.reserve(T);
  for (int t = 0; t < T; ++t) {
    out.push_back(reshape(slice(t3, 1, t, 1), {b, d}));
  }
  return out;
}

Tensor WorldModel::tpc_loss(const Tensor& encoded, const Tensor& actions,
                            Rng& rng, double sigma_noise, bool smoothing,
                            std::vector<double>* per_step) const {
  if (encoded.ndim() != 3) throw ShapeError("tpc_loss: encoded must be {B,T,D}");
  int b = encoded.shape()[0];
  if (b < 2) throw ContractError("tpc_loss: batch must be >= 2 for negatives");
  auto latents = split_steps(encoded);
  auto acts = split_steps(actions);
  Unroll u = unroll(latents, acts, smoothing, &rng);

  Tensor total = Tensor::scalar(0.0);
  for (size_t t = 1; t < latents.size(); ++t) {
    Tensor noise = Tensor::from_values(
        latents[t].shape(), rng.normal_vec(latents[t].size()));
    Tensor noisy_future = add(latents[t], scale(noise, sigma_noise));
    Tensor scores = u.priors[t].pairwise_log_prob(noisy_future);
    Tensor bound = infonce(scores);
    if (per_step) per_step->push_back(bound.value());
    total = add(total, bound);
  }
  return total;
}

Tensor WorldModel::consistency_loss(const Tensor& encoded, const Tensor& actions,
                                    Rng& rng, bool smoothing) const {
  if (encoded.ndim() != 3) {
    throw ShapeError("consistency_loss: encoded must be {B,T,D}");
  }
  auto latents = split_steps(encoded);
  auto acts = split_steps(actions);
  Unroll u = unroll(latents, acts, smoothing, &rng);

  Tensor total = Tensor::scalar(0.0);
  for (size_t t = 1; t < latents.size(); ++t) {
    total = add(total, mean(u.priors[t].log_prob(latents[t])));
  }
  return total;
}

Tensor WorldModel::spc_loss(const Tensor& encoded_clean,
                            const Tensor& encoded_noisy, double sigma,
                            std::vector<double>* per_step) const {
  if (encoded_clean.ndim() != 3 ||
      encoded_clean.shape() != encoded_noisy.shape()) {
    throw ShapeError("spc_loss: views must both be {B,T,D}");
  }
  if (encoded_clean.shape()[0] < 2) {
    throw ContractError("spc_loss: batch must be >= 2 for negatives");
  }
  auto clean = split_steps(encoded_clean);
  auto noisy = split_steps(encoded_noisy);
  Tensor total = Tensor::scalar(0.0);
  for (size_t t = 0; t < clean.size(); ++t) {
    Tensor scores = pairwise_fixed_gaussian_scores(noisy[t], clean[t], sigma);
    Tensor bound = infonce(scores);
    if (per_step) per_step->push_back(bound.value());
    total = add(total, bound);
  }
  return total;
}

Tensor WorldModel::reward_loss(const Tensor& encoded,
                               const Tensor& rewards) const {
  if (encoded.ndim() != 3 || rewards.ndim() != 2 ||
      encoded.shape()[0] != rewards.shape()[0] ||
      encoded.shape()[1] != rewards.shape()[1]) {
    throw ShapeError("reward_loss: encoded {B,T,D} and rewards {B,T} required");
  }
  int b = encoded.shape()[0];
  int T = encoded.shape()[1];
  Tensor flat = reshape(encoded, {b * T, cfg_.latent_dim});
  Tensor pred = reward_mean(flat);
  Tensor target = reshape(rewards, {b * T});
  // sum_t mean_b ln N(r | pred, 1) = (1/B) sum_{b,t} [ -0.5 (r-pred)^2 - 0.5 ln 2pi ]
  Tensor sq = scale(square(sub(target, pred)), -0.5);
  Tensor per = add_scalar(sq, -0.5 * kLog2Pi);
  return scale(sum(per), 1.0 / b);
}

WorldModelLosses WorldModel::total_loss(const TrajectoryBatch& batch,
                                        const LossWeights& w, Rng& rng,
                                        bool smoothing,
                                        bool detach_reward_encoder) const {
  if (batch.obs.ndim() != 3) throw ShapeError("total_loss: obs must be {B,T,P}");
  int b = batch.batch;
  int T = batch.horizon;
  if (b < 2) throw ContractError("total_loss: batch must be >= 2");

  // One shared encoding and one shared unroll feed every term.
  Tensor obs_flat = reshape(batch.obs, {b * T, cfg_.obs_dim});
  Tensor enc_flat = encode(obs_flat);
  Tensor encoded = reshape(enc_flat, {b, T, cfg_.latent_dim});
  auto latents = split_steps(encoded);
  auto acts = split_steps(batch.actions);
  Unroll u = unroll(latents, acts, smoothing, &rng);

  WorldModelLosses out;

  // Temporal term: prior log densities as the tied critic, noisy future code.
  Tensor tpc_total = Tensor::scalar(0.0);
  for (int t = 1; t < T; ++t) {
    Tensor noise =
        Tensor::from_values(latents[t].shape(), rng.normal_vec(latents[t].size()));
    Tensor noisy_future = add(latents[t], scale(noise, w.sigma_tpc_noise));
    Tensor bound = infonce(u.priors[t].pairwise_log_prob(noisy_future));
    out.tpc_per_step.push_back(bound.value());
    tpc_total = add(tpc_total, bound);
  }
  out.tpc = tpc_total;

  // Consistency: diagonal of the same machinery, clean latents.
  Tensor cons_total = Tensor::scalar(0.0);
  for (int t = 1; t < T; ++t) {
    cons_total = add(cons_total, mean(u.priors[t].log_prob(latents[t])));
  }
  out.cons = cons_total;

  // Static term: second view through the encoder with pixel jitter.
  Tensor jitter = Tensor::from_values(
      obs_flat.shape(), rng.normal_vec(obs_flat.size()));
  Tensor noisy_obs = add(obs_flat, scale(jitter, w.spc_jitter));
  Tensor enc_noisy = reshape(encode(noisy_obs), {b, T, cfg_.latent_dim});
  auto noisy_latents = split_steps(enc_noisy);
  Tensor spc_total = Tensor::scalar(0.0);
  for (int t = 0; t < T; ++t) {
    Tensor bound = infonce(
        pairwise_fixed_gaussian_scores(noisy_latents[t], latents[t], w.sigma_spc));
    out.spc_per_step.push_back(bound.value());
    spc_total = add(spc_total, bound);
  }
  out.spc = spc_total;

  // Reward likelihood, optionally cut off from the encoder.
  Tensor rew_input = detach_reward_encoder ? enc_flat.detach() : enc_flat;
  Tensor pred = reward_mean(rew_input);
  Tensor target = reshape(batch.rewards, {b * T});
  out.reward = scale(
      sum(add_scalar(scale(square(sub(target, pred)), -0.5), -0.5 * kLog2Pi)),
      1.0 / b);

  out.total = add(add(scale(out.tpc, w.tpc), scale(out.cons, w.cons)),
                  add(scale(out.spc, w.spc), scale(out.reward, w.reward)));

  out.latent_std = batch_latent_std(enc_flat);

  // Imagination starts: every (h_t, s_t) pair, rows ordered t-major.
  std::vector<Tensor> hs, ss;
  for (int t = 0; t < T; ++t) {
    hs.push_back(u.h[t]);
    ss.push_back(latents[t]);
  }
  {
    NoGradGuard ng;
    out.start_h = concat(
        [&] {
          std::vector<Tensor> d;
          for (auto& h : hs) d.push_back(h.detach());
          return d;
        }(),
        0);
    out.start_s = concat(
        [&] {
          std::vector<Tensor> d;
          for (auto& s : ss) d.push_back(s.detach());
          return d;
        }(),
        0);
  }
  return out;
}

double batch_latent_std(const Tensor& latents) {
  int n = latents.shape()[0];
  int d = latents.shape()[1];
  if (n < 2) return 0.0;
  auto v = latents.values();
  double acc = 0.0;
  for (int j = 0; j < d; ++j) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += v[static_cast<size_t>(i) * d + j];
    m /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = v[static_cast<size_t>(i) * d + j] - m;
      var += x * x;
    }
    acc += std::sqrt(var / n);
  }
  return acc / d;
}

}  // namespace tpc
