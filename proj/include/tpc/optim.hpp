#pragma once

#include <cstdint>
#include <vector>

#include "tpc/tensor.hpp"

namespace tpc {

// Scales all grads in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& params, double max_norm);
double global_grad_norm(const std::vector<Tensor>& params);

// Adaptive-moment optimizer with bias correction and built-in global-norm
// clipping. Bound to a fixed parameter list at construction; moments are
// addressable for checkpointing.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double learning_rate, double clip_norm,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One update from the grads currently on the parameters. Refuses to touch
  // the parameters if any gradient is non-finite. Returns pre-clip grad norm.
  double step();

  int64_t step_count() const { return step_count_; }
  double learning_rate() const { return lr_; }
  double clip_norm() const { return clip_norm_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void restore(int64_t step_count, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  double lr_, clip_norm_, beta1_, beta2_, eps_;
  int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace tpc
