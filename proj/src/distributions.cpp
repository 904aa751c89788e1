#include "tpc/distributions.hpp"

#include <cmath>

namespace tpc {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

Tensor DiagGaussian::log_prob(const Tensor& x) const {
  // -0.5 * z^2 - log_std - 0.5*log(2pi), summed over the last axis
  Tensor z = mul(sub(x, mean), exp(neg(log_std)));
  Tensor per = sub(scale(square(z), -0.5), log_std);
  int axis = x.ndim() == 0 ? 0 : x.ndim() - 1;
  Tensor s = sum(per, axis);
  return add_scalar(s, -0.5 * kLog2Pi * dim());
}

Tensor DiagGaussian::rsample(Rng& rng) const {
  Tensor eps = Tensor::from_values(mean.shape(), rng.normal_vec(mean.size()));
  return add(mean, mul(exp(log_std), eps));
}

Tensor DiagGaussian::pairwise_log_prob(const Tensor& x) const {
  if (x.ndim() != 2 || mean.ndim() != 2) {
    throw ShapeError("pairwise_log_prob: expects rank-2 inputs");
  }
  int k = x.shape()[0];
  int d = x.shape()[1];
  if (mean.shape()[0] != k || mean.shape()[1] != d) {
    throw ShapeError("pairwise_log_prob: mismatched shapes " +
                     shape_str(x.shape()) + " vs " + shape_str(mean.shape()));
  }
  Tensor xi = reshape(x, {k, 1, d});
  Tensor mj = reshape(mean, {1, k, d});
  Tensor lj = reshape(log_std, {1, k, d});
  Tensor z = mul(sub(xi, mj), exp(neg(lj)));          // {K,K,D}
  Tensor quad = scale(sum(square(z), 2), -0.5);       // {K,K}
  Tensor log_det = sum(lj, 2);                        // {1,K}
  return add_scalar(sub(quad, log_det), -0.5 * kLog2Pi * d);
}

Tensor infonce(const Tensor& scores) {
  if (scores.ndim() != 2 || scores.shape()[0] != scores.shape()[1]) {
    throw ShapeError("infonce: expects a square score matrix, got " +
                     shape_str(scores.shape()));
  }
  int k = scores.shape()[0];
  Tensor diag = sum(mul(scores, Tensor::eye(k)), 1);  // {K}
  Tensor lse = logsumexp(scores, 1);                  // {K}
  return add_scalar(mean(sub(diag, lse)), std::log(static_cast<double>(k)));
}

Tensor pairwise_fixed_gaussian_scores(const Tensor& x, const Tensor& y,
                                      double sigma) {
  if (!(sigma > 0)) throw ContractError("pairwise scores: sigma <= 0");
  if (x.ndim() != 2 || y.ndim() != 2 || x.shape() != y.shape()) {
    throw ShapeError("pairwise scores: expects matching rank-2 inputs");
  }
  int k = x.shape()[0];
  int d = x.shape()[1];
  Tensor xi = reshape(x, {k, 1, d});
  Tensor yj = reshape(y, {1, k, d});
  Tensor sq = sum(square(sub(xi, yj)), 2);  // {K,K}
  double c = -d * std::log(sigma) - 0.5 * kLog2Pi * d;
  return add_scalar(scale(sq, -1.0 / (2.0 * sigma * sigma)), c);
}

Tensor SquashedGaussian::rsample_pre_tanh(Rng& rng) const {
  Tensor eps = Tensor::from_values(mean.shape(), rng.normal_vec(mean.size()));
  return add(mean, mul(std, eps));
}

Tensor SquashedGaussian::mode() const { return tanh(mean); }

Tensor SquashedGaussian::log_prob_from_pre_tanh(const Tensor& u) const {
  int d = mean.shape().back();
  Tensor log_std = log(std);
  Tensor z = mul(sub(u, mean), exp(neg(log_std)));
  Tensor gauss = sub(scale(square(z), -0.5), log_std);
  // tanh change of variables: subtract log(1 - tanh(u)^2) per coordinate
  Tensor log_jac = scale(add_scalar(sub(neg(u), softplus(scale(u, -2.0))),
                                    std::log(2.0)),
                         2.0);
  int axis = u.ndim() - 1;
  Tensor s = sum(sub(gauss, log_jac), axis);
  return add_scalar(s, -0.5 * kLog2Pi * d);
}

}  // namespace tpc
