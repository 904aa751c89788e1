#pragma once

#include <map>
#include <string>
#include <vector>

#include "tpc/rng.hpp"
#include "tpc/tensor.hpp"

namespace tpc {

// Ordered registry of named leaf parameters. Paths are slash-separated and
// stable; they key the checkpoint format.
class ParamStore {
 public:
  Tensor create(const std::string& path, const Shape& shape,
                std::vector<double> values, bool requires_grad = true);
  Tensor glorot(const std::string& path, int fan_in, int fan_out, Rng& rng,
                double gain = 1.0);
  Tensor zeros(const std::string& path, const Shape& shape);

  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const;
  const std::vector<std::string>& paths() const { return order_; }
  std::vector<Tensor> all() const;

  void zero_grads();
  // Hard-copies values from another store with identical paths and shapes.
  void copy_values_from(const ParamStore& other);
  void set_requires_grad(bool rg);

 private:
  std::map<std::string, Tensor> params_;
  std::vector<std::string> order_;
};

// y = x @ w + b for x of shape {N, in}.
struct Dense {
  Tensor w, b;
  Dense() = default;
  Dense(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
        bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
  int out_dim() const { return w.shape()[1]; }
};

// Gated recurrent cell: update/reset gates plus tanh candidate.
// With all-zero weights the new state is 0.5*h, independent of x.
struct GruCell {
  Dense gate_z, gate_r, cand;
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& prefix, int input_dim,
          int hidden_dim, Rng& rng);
  // x: {N, input_dim}, h: {N, hidden_dim} -> {N, hidden_dim}
  Tensor step(const Tensor& x, const Tensor& h) const;
  int hidden_dim() const { return gate_z.out_dim(); }
};

}  // namespace tpc
