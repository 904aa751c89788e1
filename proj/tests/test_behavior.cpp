#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"
#include "tpc/behavior.hpp"

using namespace tpc;
using tpc::testing::max_grad_rel_err;

namespace {

WorldModelConfig tiny_wm_config() {
  WorldModelConfig c;
  c.obs_dim = 8;
  c.action_dim = 2;
  c.latent_dim = 3;
  c.hidden_dim = 5;
  c.encoder_hidden = 6;
  c.prior_hidden = 6;
  c.reward_hidden = 6;
  c.rssm_embed = 4;
  return c;
}

BehaviorConfig tiny_behavior_config() {
  BehaviorConfig b;
  b.hidden = 8;
  b.horizon = 3;
  return b;
}

void zero_store(ParamStore& store, const std::string& prefix = "") {
  for (const auto& path : store.paths()) {
    if (prefix.empty() || path.rfind(prefix, 0) == 0) {
      auto v = store.at(path).raw_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
}

// independent evaluation of the literal truncated-mixture formula:
// V_lambda = (1-lambda) sum_{k=1}^{H-1} lambda^{k-1} V_N^k + lambda^{H-1} V_N^H
// with V_N^k(tau) = sum_{n=tau}^{h-1} gamma^{n-tau} r_n + gamma^{h-tau} v(h),
// h = min(tau+k, H).
std::vector<double> lambda_return_double_sum(const std::vector<double>& r,
                                             const std::vector<double>& v,
                                             double gamma, double lambda) {
  int H = static_cast<int>(r.size());
  auto v_n_k = [&](int tau, int k) {
    int h = std::min(tau + k, H);
    double acc = 0.0, g = 1.0;
    for (int n = tau; n < h; ++n) {
      acc += g * r[n];
      g *= gamma;
    }
    return acc + g * v[h];
  };
  std::vector<double> out(H);
  for (int tau = 0; tau < H; ++tau) {
    double acc = 0.0, w = 1.0;  // w = lambda^{k-1}
    for (int k = 1; k <= H - 1; ++k) {
      acc += (1.0 - lambda) * w * v_n_k(tau, k);
      w *= lambda;
    }
    acc += w * v_n_k(tau, H);
    out[tau] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("sampled actions always land strictly inside (-1, 1)") {
  Rng rng(1);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h = Tensor::from_values({1, 5}, rng.normal_vec(5));
  Tensor s = Tensor::from_values({1, 3}, rng.normal_vec(3));
  SquashedGaussian d = beh.policy_dist(h, s);
  for (int i = 0; i < 10000; ++i) {
    Tensor a = tanh(d.rsample_pre_tanh(rng));
    for (double v : a.values()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
    Tensor lp = d.log_prob_from_pre_tanh(d.rsample_pre_tanh(rng));
    CHECK(std::isfinite(lp.values()[0]));
  }
}

TEST_CASE("zero-weight policy is symmetric about zero") {
  Rng rng(2);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  zero_store(beh.policy_params());
  Tensor h = Tensor::from_values({1, 5}, rng.normal_vec(5));
  Tensor s = Tensor::from_values({1, 3}, rng.normal_vec(3));
  SquashedGaussian d = beh.policy_dist(h, s);
  for (double v : d.mean.values()) CHECK(v == 0.0);
  for (double v : d.mode().values()) CHECK(v == 0.0);
  // the softplus std head still reports the configured initial scale
  for (double v : d.std.values()) {
    CHECK(v == doctest::Approx(5.0).epsilon(1e-6));
  }
  double mean_a = 0.0;
  for (int i = 0; i < 20000; ++i) {
    mean_a += tanh(d.rsample_pre_tanh(rng)).values()[0];
  }
  CHECK(std::fabs(mean_a / 20000) < 0.02);
}

TEST_CASE("lambda = 0 reduces to the one-step bootstrap") {
  std::vector<double> r = {1.0, 2.0, 3.0};
  std::vector<double> v = {10.0, 20.0, 30.0, 40.0};
  auto out = lambda_return(r, v, 0.9, 0.0);
  for (int tau = 0; tau < 3; ++tau) {
    CHECK(out[tau] == doctest::Approx(r[tau] + 0.9 * v[tau + 1]).epsilon(1e-12));
  }
}

TEST_CASE("lambda = 1 reduces to the discounted sum plus terminal value") {
  std::vector<double> r = {1.0, 2.0, 3.0};
  std::vector<double> v = {10.0, 20.0, 30.0, 40.0};
  double g = 0.9;
  auto out = lambda_return(r, v, g, 1.0);
  for (int tau = 0; tau < 3; ++tau) {
    double expect = 0.0, w = 1.0;
    for (int n = tau; n < 3; ++n) {
      expect += w * r[n];
      w *= g;
    }
    expect += w * v[3];
    CHECK(out[tau] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("backward recursion equals the explicit double sum") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    int H = rng.uniform_int(1, 10);
    std::vector<double> r(H), v(H + 1);
    for (double& x : r) x = rng.normal() * 3.0;
    for (double& x : v) x = rng.normal() * 3.0;
    double gamma = rep % 3 == 0 ? 0.99 : rng.uniform(0.0, 1.0);
    double lambda = rep % 3 == 0 ? 0.95 : rng.uniform(0.0, 1.0);
    auto fast = lambda_return(r, v, gamma, lambda);
    auto brute = lambda_return_double_sum(r, v, gamma, lambda);
    for (int tau = 0; tau < H; ++tau) {
      CHECK(std::fabs(fast[tau] - brute[tau]) < 1e-10);
    }
  }
}

TEST_CASE("tensor lambda_return matches the scalar recursion") {
  Rng rng(4);
  int H = 5, N = 3;
  std::vector<Tensor> rt, vt;
  std::vector<std::vector<double>> rs(N), vs(N);
  for (int t = 0; t < H; ++t) {
    std::vector<double> row = rng.normal_vec(N);
    for (int i = 0; i < N; ++i) rs[i].push_back(row[i]);
    rt.push_back(Tensor::from_values({N}, std::move(row)));
  }
  for (int t = 0; t <= H; ++t) {
    std::vector<double> row = rng.normal_vec(N);
    for (int i = 0; i < N; ++i) vs[i].push_back(row[i]);
    vt.push_back(Tensor::from_values({N}, std::move(row)));
  }
  auto batched = lambda_return(rt, vt, 0.99, 0.95);
  for (int i = 0; i < N; ++i) {
    auto scalar = lambda_return(rs[i], vs[i], 0.99, 0.95);
    for (int t = 0; t < H; ++t) {
      CHECK(batched[t].values()[i] == doctest::Approx(scalar[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("lambda_return validates gamma and lambda") {
  std::vector<double> r = {1.0};
  std::vector<double> v = {0.0, 0.0};
  CHECK_THROWS_AS(lambda_return(r, v, -0.1, 0.5), ContractError);
  CHECK_THROWS_AS(lambda_return(r, v, 0.9, 1.5), ContractError);
  CHECK_THROWS_AS(lambda_return(r, std::vector<double>{0.0}, 0.9, 0.5),
                  ContractError);
}

TEST_CASE("imagine produces consistent lengths and finite states") {
  Rng rng(5);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Rng master(6);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r(master.next_u64());
    Tensor h0 = Tensor::from_values({4, 5}, r.normal_vec(20));
    Tensor s0 = Tensor::from_values({4, 3}, r.normal_vec(12));
    ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 15, r);
    CHECK(traj.h.size() == 16);
    CHECK(traj.actions.size() == 15);
    CHECK(traj.rewards.size() == 15);
    CHECK(traj.values.size() == 16);
    CHECK(traj.lambda_returns.size() == 15);
    for (const Tensor& st : traj.s) {
      for (double v : st.values()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("imagine rejects a non-positive horizon") {
  Rng rng(7);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h0 = Tensor::zeros({1, 5});
  Tensor s0 = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(beh.imagine(wm, h0, s0, 0, rng), ContractError);
}

TEST_CASE("deterministic rollouts are functions of the start state") {
  Rng rng(8);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h0 = Tensor::from_values({2, 5}, rng.normal_vec(10));
  Tensor s0 = Tensor::from_values({2, 3}, rng.normal_vec(6));
  Rng ra(1), rb(2);  // different streams must not matter without sampling
  ImaginedTrajectory t1 = beh.imagine(wm, h0, s0, 4, ra, false);
  ImaginedTrajectory t2 = beh.imagine(wm, h0, s0, 4, rb, false);
  for (size_t t = 0; t < t1.s.size(); ++t) {
    for (int i = 0; i < t1.s[t].size(); ++i) {
      CHECK(t1.s[t].values()[i] == t2.s[t].values()[i]);
    }
  }
}

TEST_CASE("constant reward and constant value give a vanishing actor gradient") {
  Rng rng(9);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  // reward head: constant c; value and target: constant
  zero_store(wm.params(), "reward/");
  wm.params().at("reward/out/b").raw_values()[0] = 0.7;
  zero_store(beh.value_params());
  zero_store(beh.target_params());

  Tensor h0 = Tensor::from_values({3, 5}, rng.normal_vec(15));
  Tensor s0 = Tensor::from_values({3, 3}, rng.normal_vec(9));
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 3, rng);
  beh.policy_params().zero_grads();
  wm.params().zero_grads();
  backward(beh.actor_loss(traj));
  double norm = global_grad_norm(beh.policy_params().all());
  CHECK(norm < 1e-8);
}

TEST_CASE("actor gradient matches finite differences on a small policy") {
  Rng rng(10);
  WorldModel wm(tiny_wm_config(), rng);
  BehaviorConfig bc = tiny_behavior_config();
  bc.horizon = 2;
  Behavior beh(bc, 8, 2, rng);
  Rng data(11);
  Tensor h0 = Tensor::from_values({3, 5}, data.normal_vec(15));
  Tensor s0 = Tensor::from_values({3, 3}, data.normal_vec(9));
  auto f = [&] {
    Rng noise(17);  // frozen rollout noise
    return beh.actor_loss(beh.imagine(wm, h0, s0, bc.horizon, noise));
  };
  CHECK(max_grad_rel_err(f, beh.policy_params().all()) < 1e-4);
}

TEST_CASE("value loss at the regression fixed point is zero") {
  Rng rng(12);
  WorldModel wm(tiny_wm_config(), rng);
  BehaviorConfig bc = tiny_behavior_config();
  bc.gamma = 1.0;
  Behavior beh(bc, 8, 2, rng);
  // rewards identically zero, every value network constant c
  zero_store(wm.params(), "reward/");
  zero_store(beh.value_params());
  zero_store(beh.target_params());
  beh.value_params().at("value/out/b").raw_values()[0] = 1.3;
  beh.target_params().at("value/out/b").raw_values()[0] = 1.3;

  Tensor h0 = Tensor::from_values({2, 5}, rng.normal_vec(10));
  Tensor s0 = Tensor::from_values({2, 3}, rng.normal_vec(6));
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 3, rng);
  CHECK(beh.value_loss(traj).value() == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("value loss is invariant to jointly permuting the step index") {
  Rng rng(13);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h0 = Tensor::from_values({2, 5}, rng.normal_vec(10));
  Tensor s0 = Tensor::from_values({2, 3}, rng.normal_vec(6));
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 3, rng);
  double base = beh.value_loss(traj).value();

  ImaginedTrajectory shuffled = traj;
  std::swap(shuffled.h[0], shuffled.h[2]);
  std::swap(shuffled.s[0], shuffled.s[2]);
  std::swap(shuffled.lambda_returns[0], shuffled.lambda_returns[2]);
  CHECK(beh.value_loss(shuffled).value() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("value gradient matches finite differences") {
  Rng rng(14);
  WorldModel wm(tiny_wm_config(), rng);
  BehaviorConfig bc = tiny_behavior_config();
  bc.horizon = 2;
  Behavior beh(bc, 8, 2, rng);
  Tensor h0 = Tensor::from_values({3, 5}, rng.normal_vec(15));
  Tensor s0 = Tensor::from_values({3, 3}, rng.normal_vec(9));
  Rng noise(19);
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, bc.horizon, noise);
  auto f = [&] { return beh.value_loss(traj); };
  CHECK(max_grad_rel_err(f, beh.value_params().all()) < 1e-4);
}

TEST_CASE("value loss reaches no dynamics, policy, or reward parameters") {
  Rng rng(15);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h0 = Tensor::from_values({2, 5}, rng.normal_vec(10));
  Tensor s0 = Tensor::from_values({2, 3}, rng.normal_vec(6));
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 3, rng);
  wm.params().zero_grads();
  beh.policy_params().zero_grads();
  beh.value_params().zero_grads();
  backward(beh.value_loss(traj));
  CHECK(global_grad_norm(wm.params().all()) == 0.0);
  CHECK(global_grad_norm(beh.policy_params().all()) == 0.0);
  CHECK(global_grad_norm(beh.value_params().all()) > 0.0);
}

TEST_CASE("actor loss reaches no value or target parameters") {
  Rng rng(16);
  WorldModel wm(tiny_wm_config(), rng);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  Tensor h0 = Tensor::from_values({2, 5}, rng.normal_vec(10));
  Tensor s0 = Tensor::from_values({2, 3}, rng.normal_vec(6));
  ImaginedTrajectory traj = beh.imagine(wm, h0, s0, 3, rng);
  beh.value_params().zero_grads();
  beh.policy_params().zero_grads();
  backward(beh.actor_loss(traj));
  CHECK(global_grad_norm(beh.value_params().all()) == 0.0);
  CHECK(global_grad_norm(beh.policy_params().all()) > 0.0);
  for (const Tensor& t : beh.target_params().all()) {
    CHECK_FALSE(t.requires_grad());
  }
}

TEST_CASE("target updates copy exactly and stay frozen in between") {
  Rng rng(17);
  Behavior beh(tiny_behavior_config(), 8, 2, rng);
  CHECK(beh.config().target_update_every == 100);

  Tensor feat = Tensor::from_values({2, 8}, rng.normal_vec(16));
  // construction copies: target == value
  for (int i = 0; i < 2; ++i) {
    CHECK(beh.value(feat).values()[i] == beh.target_value(feat).values()[i]);
  }
  // drift the value net; target must hold still off-schedule
  beh.value_params().at("value/out/b").raw_values()[0] += 0.5;
  beh.update_target(42, 100);
  CHECK(beh.target_value(feat).values()[0] !=
        doctest::Approx(beh.value(feat).values()[0]).epsilon(1e-12));
  // on-schedule copy restores equality
  beh.update_target(100, 100);
  for (int i = 0; i < 2; ++i) {
    CHECK(beh.value(feat).values()[i] == beh.target_value(feat).values()[i]);
  }
}
