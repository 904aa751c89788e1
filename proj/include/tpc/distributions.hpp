#pragma once

#include "tpc/rng.hpp"
#include "tpc/tensor.hpp"

namespace tpc {

// Diagonal Gaussian over the last axis, parameterized by log standard
// deviation (stable at small variances).
struct DiagGaussian {
  Tensor mean;     // {..., D}
  Tensor log_std;  // {..., D}

  int dim() const { return mean.shape().back(); }

  // Sum over the last axis of per-coordinate log densities: {..., D} -> {...}.
  Tensor log_prob(const Tensor& x) const;

  // mean + exp(log_std) * eps with eps ~ N(0, I); gradients flow through
  // mean and log_std.
  Tensor rsample(Rng& rng) const;

  // Log densities of every row of x under every row of the distribution:
  // x {K, D}, mean/log_std {K, D} -> {K, K} with out[i][j] = log N(x_i | m_j, s_j).
  Tensor pairwise_log_prob(const Tensor& x) const;
};

// InfoNCE lower bound from a K x K score matrix with positives on the
// diagonal: mean_i [ s_ii - logsumexp_j s_ij + ln K ]. Bounded above by ln K.
Tensor infonce(const Tensor& scores);

// Squared-distance critic with fixed variance: out[i][j] =
// -||x_i - y_j||^2 / (2 sigma^2) - D log(sigma) - D/2 log(2 pi).
Tensor pairwise_fixed_gaussian_scores(const Tensor& x, const Tensor& y,
                                      double sigma);

// Policy head output: squashed diagonal Gaussian a = tanh(u), u ~ N(mean, std).
struct SquashedGaussian {
  Tensor mean;  // pre-tanh, {N, A}
  Tensor std;   // positive, {N, A}

  // Reparameterized pre-tanh sample.
  Tensor rsample_pre_tanh(Rng& rng) const;
  // Deterministic action: tanh(mean).
  Tensor mode() const;
  // log pi(a) for a = tanh(u), given the pre-tanh value u. Uses the stable
  // form log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
  Tensor log_prob_from_pre_tanh(const Tensor& u) const;
};

}  // namespace tpc
