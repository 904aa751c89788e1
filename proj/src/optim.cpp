#include "tpc/optim.hpp"

#include <cmath>

namespace tpc {

double global_grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0)) throw ContractError("clip_global_norm: max_norm <= 0");
  double norm = global_grad_norm(params);
  if (norm > max_norm && std::isfinite(norm)) {
    double s = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.raw_grad()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Tensor> params, double learning_rate, double clip_norm,
           double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(learning_rate),
      clip_norm_(clip_norm),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (!(lr_ > 0)) throw ContractError("Adam: learning_rate <= 0");
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double Adam::step() {
  double norm = global_grad_norm(params_);
  if (!std::isfinite(norm)) {
    throw NumericError("Adam: non-finite gradient norm, update refused");
  }
  double clip_scale = norm > clip_norm_ ? clip_norm_ / norm : 1.0;

  ++step_count_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));

  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    auto g = p.raw_grad();
    auto vals = p.raw_values();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      double gi = g[i] * clip_scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      vals[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
  return norm;
}

void Adam::restore(int64_t step_count, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw ContractError("Adam::restore: moment count mismatch");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != static_cast<size_t>(params_[i].size()) ||
        v[i].size() != static_cast<size_t>(params_[i].size())) {
      throw ShapeError("Adam::restore: moment shape mismatch");
    }
  }
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace tpc
