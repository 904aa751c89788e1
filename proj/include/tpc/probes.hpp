#pragma once

#include <string>
#include <vector>

#include "tpc/env.hpp"
#include "tpc/replay.hpp"
#include "tpc/world_model.hpp"

namespace tpc {

// Flat probe samples with ground truth (for masks and linear targets).
struct ProbeDataset {
  int obs_dim = 0, state_dim = 0;
  EnvConfig env_cfg;
  std::vector<float> obs;     // N x obs_dim
  std::vector<float> states;  // N x state_dim
  int count() const {
    return obs_dim ? static_cast<int>(obs.size()) / obs_dim : 0;
  }
  static ProbeDataset from_buffer(const SequenceReplayBuffer& buffer,
                                  const EnvConfig& cfg, int max_samples,
                                  Rng& rng);
};

struct ReconProbeConfig {
  int steps = 2000;
  int hidden = 128;  // two hidden layers
  int batch = 64;
  double lr = 1e-3;
};

struct ReconProbeReport {
  double agent_mse = 0.0;
  double background_mse = 0.0;
  double background_pixel_variance = 0.0;  // irreducible floor for i.i.d. noise
};

// Trains a dense decoder from frozen-encoder latents by squared error for a
// fixed budget, then reports per-region reconstruction error using the
// environment's exact agent mask. Never writes gradients into the encoder.
ReconProbeReport probe_reconstruction(const WorldModel& wm,
                                      const ProbeDataset& data,
                                      const ReconProbeConfig& cfg, Rng& rng,
                                      std::vector<float>* reconstructions = nullptr);

struct LinearProbeReport {
  std::vector<std::string> target_names;
  std::vector<double> r2;  // held-out, per target coordinate
  bool ridge_fallback = false;
  double r2_mean() const;
  double r2_position_mean() const;  // position coordinates only
};

// Ordinary least squares from latents to the physical state (angles
// featurized as sin/cos on the target side); R^2 on a held-out split.
// A singular normal matrix falls back to ridge with lambda = 1e-6.
LinearProbeReport probe_linear(const WorldModel& wm, const ProbeDataset& data,
                               double holdout_fraction, Rng& rng);
// Same probe on externally supplied features (tests feed oracles and noise).
LinearProbeReport probe_linear_features(const std::vector<double>& features,
                                        int feature_dim,
                                        const ProbeDataset& data,
                                        double holdout_fraction, Rng& rng);

struct MiOracleResult {
  double closed_form_mi = 0.0;
  double estimate = 0.0;
  double std_err = 0.0;
};

// Scalar linear-Gaussian system s_t = a s_{t-1} + N(0,1), stationary start.
// The InfoNCE estimate uses the true dynamics as critic; closed-form MI is
// -0.5 ln(1 - a^2).
MiOracleResult mi_oracle_check(double a_coef, int batch, int n_batches,
                               Rng& rng);

// Trains wm's encoder (plus a scratch decoder) with a pixel-reconstruction
// objective for the given budget; the contrast baseline for the probes.
void train_reconstruction_encoder(WorldModel& wm, const ProbeDataset& data,
                                  const ReconProbeConfig& cfg, Rng& rng);

// Two-row grid (ground truth / reconstruction) as an 8-bit grayscale image.
void write_probe_grid(const std::string& path, const ProbeDataset& data,
                      const std::vector<float>& reconstructions, int columns);

}  // namespace tpc
