#include "tpc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tpc {

Tensor ParamStore::create(const std::string& path, const Shape& shape,
                          std::vector<double> values, bool requires_grad) {
  if (params_.count(path)) {
    throw ContractError("ParamStore: duplicate path " + path);
  }
  Tensor t = Tensor::from_values(shape, std::move(values), requires_grad);
  params_.emplace(path, t);
  order_.push_back(path);
  return t;
}

Tensor ParamStore::glorot(const std::string& path, int fan_in, int fan_out,
                          Rng& rng, double gain) {
  double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
  return create(path, {fan_in, fan_out},
                rng.uniform_vec(fan_in * fan_out, -limit, limit));
}

Tensor ParamStore::zeros(const std::string& path, const Shape& shape) {
  return create(path, shape, std::vector<double>(shape_size(shape), 0.0));
}

Tensor& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw ContractError("ParamStore: no param " + path);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw ContractError("ParamStore: no param " + path);
  return it->second;
}

bool ParamStore::contains(const std::string& path) const {
  return params_.count(path) != 0;
}

std::vector<Tensor> ParamStore::all() const {
  std::vector<Tensor> out;
  out.reserve(order_.size());
  for (const auto& p : order_) out.push_back(params_.at(p));
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [path, t] : params_) t.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (const auto& path : order_) {
    const Tensor& src = other.at(path);
    Tensor& dst = params_.at(path);
    if (src.shape() != dst.shape()) {
      throw ShapeError("copy_values_from: shape mismatch at " + path);
    }
    auto s = src.values();
    auto d = dst.raw_values();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

void ParamStore::set_requires_grad(bool rg) {
  for (auto& [path, t] : params_) t.set_requires_grad(rg);
}

Dense::Dense(ParamStore& store, const std::string& prefix, int in, int out,
             Rng& rng, bool zero_init) {
  if (zero_init) {
    w = store.zeros(prefix + "/w", {in, out});
  } else {
    w = store.glorot(prefix + "/w", in, out, rng);
  }
  b = store.zeros(prefix + "/b", {out});
}

Tensor Dense::operator()(const Tensor& x) const {
  if (x.ndim() != 2 || x.shape()[1] != w.shape()[0]) {
    throw ShapeError("Dense: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(w.shape()));
  }
  return add(matmul(x, w), b);
}

GruCell::GruCell(ParamStore& store, const std::string& prefix, int input_dim,
                 int hidden_dim, Rng& rng)
    : gate_z(store, prefix + "/z", input_dim + hidden_dim, hidden_dim, rng),
      gate_r(store, prefix + "/r", input_dim + hidden_dim, hidden_dim, rng),
      cand(store, prefix + "/c", input_dim + hidden_dim, hidden_dim, rng) {}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  Tensor xh = concat({x, h}, 1);
  Tensor z = sigmoid(gate_z(xh));
  Tensor r = sigmoid(gate_r(xh));
  Tensor c = tanh(cand(concat({x, mul(r, h)}, 1)));
  // h' = (1-z)*h + z*c
  Tensor one_minus_z = add_scalar(neg(z), 1.0);
  return add(mul(one_minus_z, h), mul(z, c));
}

}  // namespace tpc
