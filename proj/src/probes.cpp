#include "tpc/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tpc/image.hpp"
#include "tpc/optim.hpp"

namespace tpc {

ProbeDataset ProbeDataset::from_buffer(const SequenceReplayBuffer& buffer,
                                       const EnvConfig& cfg, int max_samples,
                                       Rng& rng) {
  if (buffer.episodes() == 0) throw ContractError("probe dataset: empty buffer");
  ProbeDataset d;
  d.env_cfg = cfg;
  d.obs_dim = buffer.episode(0).obs_dim;
  d.state_dim = buffer.episode(0).state_dim;
  for (int i = 0; i < max_samples; ++i) {
    const Episode& ep = buffer.episode(rng.uniform_int(0, buffer.episodes() - 1));
    int t = rng.uniform_int(0, ep.length() - 1);
    const float* o = ep.obs.data() + static_cast<size_t>(t) * d.obs_dim;
    const float* s = ep.states.data() + static_cast<size_t>(t) * d.state_dim;
    d.obs.insert(d.obs.end(), o, o + d.obs_dim);
    d.states.insert(d.states.end(), s, s + d.state_dim);
  }
  return d;
}

namespace {

// All latents of a dataset under a frozen encoder, plain doubles.
std::vector<double> encode_all(const WorldModel& wm, const ProbeDataset& data) {
  NoGradGuard ng;
  int n = data.count();
  int p = data.obs_dim;
  std::vector<double> obs(data.obs.begin(), data.obs.end());
  Tensor enc = wm.encode(Tensor::from_values({n, p}, std::move(obs)));
  return std::vector<double>(enc.values().begin(), enc.values().end());
}

struct Decoder {
  ParamStore store;
  Dense l1, l2, out;
  Decoder(int latent_dim, int hidden, int obs_dim, Rng& rng)
      : l1(store, "dec/l1", latent_dim, hidden, rng),
        l2(store, "dec/l2", hidden, hidden, rng),
        out(store, "dec/out", hidden, obs_dim, rng) {}
  Tensor operator()(const Tensor& z) const { return out(elu(l2(elu(l1(z))))); }
};

}  // namespace

ReconProbeReport probe_reconstruction(const WorldModel& wm,
                                      const ProbeDataset& data,
                                      const ReconProbeConfig& cfg, Rng& rng,
                                      std::vector<float>* reconstructions) {
  int n = data.count();
  int p = data.obs_dim;
  int d = wm.config().latent_dim;
  std::vector<double> latents = encode_all(wm, data);

  Decoder dec(d, cfg.hidden, p, rng);
  Adam opt(dec.store.all(), cfg.lr, 100.0);
  for (int step = 0; step < cfg.steps; ++step) {
    int b = std::min(cfg.batch, n);
    std::vector<double> zb(static_cast<size_t>(b) * d);
    std::vector<double> ob(static_cast<size_t>(b) * p);
    for (int i = 0; i < b; ++i) {
      int row = rng.uniform_int(0, n - 1);
      std::copy_n(latents.data() + static_cast<size_t>(row) * d, d,
                  zb.data() + static_cast<size_t>(i) * d);
      for (int j = 0; j < p; ++j) {
        ob[static_cast<size_t>(i) * p + j] =
            data.obs[static_cast<size_t>(row) * p + j];
      }
    }
    dec.store.zero_grads();
    Tensor z = Tensor::from_values({b, d}, std::move(zb));
    Tensor target = Tensor::from_values({b, p}, std::move(ob));
    Tensor loss = mean(square(sub(dec(z), target)));
    backward(loss);
    opt.step();
  }

  // full-pass reconstruction and region split via the exact agent mask
  NoGradGuard ng;
  Tensor z_all = Tensor::from_values({n, d}, latents);
  Tensor recon = dec(z_all);
  auto rv = recon.values();
  if (reconstructions) {
    reconstructions->assign(rv.begin(), rv.end());
  }

  double agent_se = 0.0, bg_se = 0.0;
  int64_t agent_n = 0, bg_n = 0;
  std::vector<double> state(data.state_dim);
  // per-pixel running stats over background pixels for the irreducible floor
  double bg_sum = 0.0, bg_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < data.state_dim; ++j) {
      state[j] = data.states[static_cast<size_t>(i) * data.state_dim + j];
    }
    std::vector<uint8_t> mask = Env::agent_mask(data.env_cfg, state);
    for (int j = 0; j < p; ++j) {
      double truth = data.obs[static_cast<size_t>(i) * p + j];
      double err = rv[static_cast<size_t>(i) * p + j] - truth;
      if (mask[j]) {
        agent_se += err * err;
        ++agent_n;
      } else {
        bg_se += err * err;
        ++bg_n;
        bg_sum += truth;
        bg_sq += truth * truth;
      }
    }
  }
  ReconProbeReport rep;
  rep.agent_mse = agent_n ? agent_se / agent_n : 0.0;
  rep.background_mse = bg_n ? bg_se / bg_n : 0.0;
  if (bg_n) {
    double m = bg_sum / bg_n;
    rep.background_pixel_variance = bg_sq / bg_n - m * m;
  }
  return rep;
}

double LinearProbeReport::r2_mean() const {
  double s = 0.0;
  for (double v : r2) s += v;
  return r2.empty() ? 0.0 : s / r2.size();
}

double LinearProbeReport::r2_position_mean() const {
  double s = 0.0;
  int n = 0;
  for (size_t i = 0; i < target_names.size(); ++i) {
    const std::string& t = target_names[i];
    if (t == "x" || t == "y" || t == "sin_theta" || t == "cos_theta") {
      s += r2[i];
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

namespace {

// targets with angles featurized as sin/cos
void featurize(Task task, const float* state, std::vector<double>& out) {
  if (task == Task::pendulum_lite) {
    out = {std::sin(state[0]), std::cos(state[0]), state[1]};
  } else {
    out = {state[0], state[1], state[2], state[3]};
  }
}

std::vector<std::string> target_names_for(Task task) {
  if (task == Task::pendulum_lite) return {"sin_theta", "cos_theta", "theta_dot"};
  return {"x", "y", "vx", "vy"};
}

// Solves A x = b with partial pivoting; returns false when near singular.
bool solve_linear(std::vector<double> a, std::vector<double> b, int n,
                  std::vector<double>& x) {
  std::vector<int> piv(n);
  std::iota(piv.begin(), piv.end(), 0);
  for (int k = 0; k < n; ++k) {
    int best = k;
    for (int i = k + 1; i < n; ++i) {
      if (std::fabs(a[static_cast<size_t>(i) * n + k]) >
          std::fabs(a[static_cast<size_t>(best) * n + k])) {
        best = i;
      }
    }
    if (std::fabs(a[static_cast<size_t>(best) * n + k]) < 1e-12) return false;
    if (best != k) {
      for (int j = 0; j < n; ++j) {
        std::swap(a[static_cast<size_t>(k) * n + j],
                  a[static_cast<size_t>(best) * n + j]);
      }
      std::swap(b[k], b[best]);
    }
    for (int i = k + 1; i < n; ++i) {
      double f = a[static_cast<size_t>(i) * n + k] /
                 a[static_cast<size_t>(k) * n + k];
      for (int j = k; j < n; ++j) {
        a[static_cast<size_t>(i) * n + j] -=
            f * a[static_cast<size_t>(k) * n + j];
      }
      b[i] -= f * b[k];
    }
  }
  x.assign(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) {
      s -= a[static_cast<size_t>(i) * n + j] * x[j];
    }
    x[i] = s / a[static_cast<size_t>(i) * n + i];
  }
  return true;
}

}  // namespace

LinearProbeReport probe_linear_features(const std::vector<double>& features,
                                        int feature_dim,
                                        const ProbeDataset& data,
                                        double holdout_fraction, Rng& rng) {
  int n = data.count();
  int d = feature_dim;
  LinearProbeReport rep;
  rep.target_names = target_names_for(data.env_cfg.task);
  int k = static_cast<int>(rep.target_names.size());

  // shuffled split
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  int n_test = std::max(1, static_cast<int>(n * holdout_fraction));
  int n_train = n - n_test;
  if (n_train < d + 2) throw ContractError("probe_linear: too few samples");

  // constant features: a constant predictor explains nothing by convention
  bool constant = true;
  for (int j = 0; j < d && constant; ++j) {
    double first = features[static_cast<size_t>(idx[0]) * d + j];
    for (int i = 1; i < n; ++i) {
      if (features[static_cast<size_t>(idx[i]) * d + j] != first) {
        constant = false;
        break;
      }
    }
  }
  if (constant) {
    rep.r2.assign(k, 0.0);
    return rep;
  }

  int dc = d + 1;  // intercept column
  auto feat_at = [&](int row, int j) -> double {
    return j < d ? features[static_cast<size_t>(row) * d + j] : 1.0;
  };

  // normal equations X'X and X'Y on the training split
  std::vector<double> xtx(static_cast<size_t>(dc) * dc, 0.0);
  std::vector<std::vector<double>> xty(k, std::vector<double>(dc, 0.0));
  std::vector<double> target(k);
  std::vector<double> tmp;
  for (int ii = 0; ii < n_train; ++ii) {
    int row = idx[ii];
    featurize(data.env_cfg.task,
              data.states.data() + static_cast<size_t>(row) * data.state_dim,
              tmp);
    for (int a = 0; a < dc; ++a) {
      double fa = feat_at(row, a);
      for (int b = 0; b < dc; ++b) {
        xtx[static_cast<size_t>(a) * dc + b] += fa * feat_at(row, b);
      }
      for (int t = 0; t < k; ++t) xty[t][a] += fa * tmp[t];
    }
  }

  std::vector<std::vector<double>> beta(k);
  bool ok = true;
  for (int t = 0; t < k && ok; ++t) {
    ok = solve_linear(xtx, xty[t], dc, beta[t]);
  }
  if (!ok) {
    rep.ridge_fallback = true;
    std::vector<double> ridge = xtx;
    for (int a = 0; a < dc; ++a) ridge[static_cast<size_t>(a) * dc + a] += 1e-6;
    for (int t = 0; t < k; ++t) {
      if (!solve_linear(ridge, xty[t], dc, beta[t])) {
        throw NumericError("probe_linear: ridge system still singular");
      }
    }
  }

  // held-out R^2 per target
  rep.r2.assign(k, 0.0);
  std::vector<double> ss_res(k, 0.0), ss_tot(k, 0.0), mean_y(k, 0.0);
  for (int ii = n_train; ii < n; ++ii) {
    int row = idx[ii];
    featurize(data.env_cfg.task,
              data.states.data() + static_cast<size_t>(row) * data.state_dim,
              tmp);
    for (int t = 0; t < k; ++t) mean_y[t] += tmp[t];
  }
  for (int t = 0; t < k; ++t) mean_y[t] /= n_test;
  for (int ii = n_train; ii < n; ++ii) {
    int row = idx[ii];
    featurize(data.env_cfg.task,
              data.states.data() + static_cast<size_t>(row) * data.state_dim,
              tmp);
    for (int t = 0; t < k; ++t) {
      double pred = 0.0;
      for (int a = 0; a < dc; ++a) pred += beta[t][a] * feat_at(row, a);
      ss_res[t] += (tmp[t] - pred) * (tmp[t] - pred);
      ss_tot[t] += (tmp[t] - mean_y[t]) * (tmp[t] - mean_y[t]);
    }
  }
  for (int t = 0; t < k; ++t) {
    rep.r2[t] = ss_tot[t] > 0 ? 1.0 - ss_res[t] / ss_tot[t] : 0.0;
  }
  return rep;
}

LinearProbeReport probe_linear(const WorldModel& wm, const ProbeDataset& data,
                               double holdout_fraction, Rng& rng) {
  std::vector<double> latents = encode_all(wm, data);
  return probe_linear_features(latents, wm.config().latent_dim, data,
                               holdout_fraction, rng);
}

MiOracleResult mi_oracle_check(double a_coef, int batch, int n_batches,
                               Rng& rng) {
  MiOracleResult res;
  res.closed_form_mi = -0.5 * std::log(1.0 - a_coef * a_coef);
  double stationary_std = 1.0 / std::sqrt(1.0 - a_coef * a_coef);

  NoGradGuard ng;
  std::vector<double> vals;
  vals.reserve(n_batches);
  for (int bi = 0; bi < n_batches; ++bi) {
    std::vector<double> x(batch), y(batch);
    for (int i = 0; i < batch; ++i) {
      x[i] = rng.normal() * stationary_std;
      y[i] = a_coef * x[i] + rng.normal();
    }
    // score[i][j] = ln N(y_i | a x_j, 1), the true dynamics as critic
    std::vector<double> scores(static_cast<size_t>(batch) * batch);
    for (int i = 0; i < batch; ++i) {
      for (int j = 0; j < batch; ++j) {
        double r = y[i] - a_coef * x[j];
        scores[static_cast<size_t>(i) * batch + j] =
            -0.5 * r * r - 0.5 * std::log(2.0 * M_PI);
      }
    }
    Tensor bound =
        infonce(Tensor::from_values({batch, batch}, std::move(scores)));
    vals.push_back(bound.value());
  }
  double m = 0.0;
  for (double v : vals) m += v;
  m /= vals.size();
  double var = 0.0;
  for (double v : vals) var += (v - m) * (v - m);
  var /= vals.size();
  res.estimate = m;
  res.std_err = std::sqrt(var / vals.size());
  return res;
}

void train_reconstruction_encoder(WorldModel& wm, const ProbeDataset& data,
                                  const ReconProbeConfig& cfg, Rng& rng) {
  int n = data.count();
  int p = data.obs_dim;
  int d = wm.config().latent_dim;
  Decoder dec(d, cfg.hidden, p, rng);

  // only encoder parameters participate; dynamics and heads stay put
  std::vector<Tensor> enc_params;
  for (const auto& path : wm.params().paths()) {
    if (path.rfind("encoder/", 0) == 0) enc_params.push_back(wm.params().at(path));
  }
  std::vector<Tensor> trainable = enc_params;
  for (const Tensor& t : dec.store.all()) trainable.push_back(t);
  Adam opt(trainable, cfg.lr, 100.0);

  for (int step = 0; step < cfg.steps; ++step) {
    int b = std::min(cfg.batch, n);
    std::vector<double> ob(static_cast<size_t>(b) * p);
    for (int i = 0; i < b; ++i) {
      int row = rng.uniform_int(0, n - 1);
      for (int j = 0; j < p; ++j) {
        ob[static_cast<size_t>(i) * p + j] =
            data.obs[static_cast<size_t>(row) * p + j];
      }
    }
    for (Tensor& t : trainable) t.zero_grad();
    Tensor target = Tensor::from_values({b, p}, std::move(ob));
    Tensor z = wm.encode(target);
    Tensor loss = mean(square(sub(dec(z), target)));
    backward(loss);
    opt.step();
  }
}

void write_probe_grid(const std::string& path, const ProbeDataset& data,
                      const std::vector<float>& reconstructions, int columns) {
  int size = data.env_cfg.image_size;
  int cols = std::min(columns, data.count());
  GrayImage img;
  img.width = cols * (size + 1) - 1;
  img.height = 2 * size + 1;
  img.pixels.assign(static_cast<size_t>(img.width) * img.height, 0);
  auto to_byte = [](double v) {
    double x = (v + 0.5) * 255.0;
    return static_cast<uint8_t>(std::min(255.0, std::max(0.0, x)));
  };
  for (int c = 0; c < cols; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        size_t src = static_cast<size_t>(c) * data.obs_dim + y * size + x;
        int px = c * (size + 1) + x;
        img.pixels[static_cast<size_t>(y) * img.width + px] =
            to_byte(data.obs[src]);
        img.pixels[static_cast<size_t>(y + size + 1) * img.width + px] =
            to_byte(reconstructions[src]);
      }
    }
  }
  write_pgm(path, img);
}

}  // namespace tpc
