#pragma once

#include <vector>

#include "tpc/distributions.hpp"
#include "tpc/nn.hpp"
#include "tpc/rng.hpp"
#include "tpc/tensor.hpp"

namespace tpc {

struct WorldModelConfig {
  int obs_dim = 256;  // flattened pixels
  int action_dim = 1;
  int latent_dim = 10;   // stochastic code dimension
  int hidden_dim = 40;   // recurrent state dimension
  int encoder_hidden = 128;
  int prior_hidden = 64;
  int reward_hidden = 64;
  int rssm_embed = 32;  // dense embedding of [s, a] ahead of the cell
  double log_std_lo = -5.0;
  double log_std_hi = 2.0;
  bool zero_init_encoder_out = false;

  // Dimensions from the reference configuration (fidelity runs).
  static WorldModelConfig paper_scale(int obs_dim, int action_dim);
};

struct LossWeights {
  double tpc = 1.0;      // lambda_1
  double cons = 0.1;     // lambda_2
  double spc = 1.0;      // lambda_3
  double reward = 1.0;   // lambda_4
  double sigma_spc = 0.2;
  double sigma_tpc_noise = 0.2;
  double spc_jitter = 0.01;  // pixel noise for the second encoder view
};

// B sequences of length T: observations, the T-1 actions between them, and
// the reward that arrived with each observation.
struct TrajectoryBatch {
  int batch = 0;    // B
  int horizon = 0;  // T
  Tensor obs;       // {B, T, P}
  Tensor actions;   // {B, T-1, A}
  Tensor rewards;   // {B, T}
};

struct WorldModelLosses {
  Tensor tpc, cons, spc, reward;
  Tensor total;  // maximization objective
  std::vector<double> tpc_per_step;  // InfoNCE per time step, t = 2..T
  std::vector<double> spc_per_step;  // t = 1..T
  double latent_std = 0.0;           // mean over dims of batch latent std
  Tensor start_h, start_s;           // detached {B*T, .} imagination starts
};

class WorldModel {
 public:
  WorldModel(const WorldModelConfig& cfg, Rng& init_rng);

  // Deterministic encoder: {N, P} -> {N, latent_dim}.
  Tensor encode(const Tensor& obs) const;
  // Recurrent update: h' = cell(h, [s, a]).
  Tensor rssm_step(const Tensor& h, const Tensor& s, const Tensor& a) const;
  // Stochastic-state prediction from the recurrent state.
  DiagGaussian prior(const Tensor& h) const;
  // Unit-variance reward head mean: {N, latent_dim} -> {N}.
  Tensor reward_mean(const Tensor& s) const;
  // Dynamics-associated input noise: s + exp(log_std) * eps.
  Tensor smooth_inputs(const Tensor& s, const DiagGaussian& prior_dist,
                       Rng& rng) const;

  struct Unroll {
    std::vector<Tensor> h;             // T entries, h[0] is the zero init step
    std::vector<DiagGaussian> priors;  // priors[t] = prior(h[t])
    std::vector<Tensor> fed;           // latents actually fed to the cell
  };
  Unroll unroll(const std::vector<Tensor>& latents,
                const std::vector<Tensor>& actions, bool smoothing,
                Rng* rng) const;

  // Standalone objective terms (each does its own unroll); encoded is
  // {B, T, latent_dim}, actions {B, T-1, action_dim}.
  Tensor tpc_loss(const Tensor& encoded, const Tensor& actions, Rng& rng,
                  double sigma_noise = 0.2, bool smoothing = true,
                  std::vector<double>* per_step = nullptr) const;
  Tensor consistency_loss(const Tensor& encoded, const Tensor& actions,
                          Rng& rng, bool smoothing = true) const;
  Tensor spc_loss(const Tensor& encoded_clean, const Tensor& encoded_noisy,
                  double sigma, std::vector<double>* per_step = nullptr) const;
  Tensor reward_loss(const Tensor& encoded, const Tensor& rewards) const;

  // Shared single forward pass feeding all four terms.
  WorldModelLosses total_loss(const TrajectoryBatch& batch,
                              const LossWeights& weights, Rng& rng,
                              bool smoothing = true,
                              bool detach_reward_encoder = false) const;

  const WorldModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  std::vector<Tensor> split_steps(const Tensor& t3) const;  // {B,T,D} -> T x {B,D}

  WorldModelConfig cfg_;
  ParamStore store_;
  Dense enc1_, enc2_, enc_out_;
  Dense rssm_in_;
  GruCell cell_;
  Dense prior_hidden_, prior_out_;
  Dense rew1_, rew2_, rew_out_;
};

// Mean over dims of the per-dimension standard deviation across rows.
double batch_latent_std(const Tensor& latents);

}  // namespace tpc
