#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tpc {

using Shape = std::vector<int>;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Error taxonomy: shape mismatches, math-domain violations, non-finite
// values, and broken call contracts are distinct failure modes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> v;
  std::vector<double> g;  // sized lazily, same length as v once used
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->g, accumulates into parents' g.
  std::function<void(Node&)> backward_fn;
  bool visited = false;  // traversal scratch

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

bool grad_enabled();

}  // namespace detail

// Disables tape recording in scope (data collection, evaluation, probes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense n-d array with an attached reverse-mode tape. Value semantics on the
// handle; the underlying node is shared. Values are immutable after creation
// except through raw_values() on leaves (initializers, optimizer updates).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_values(const Shape& shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);  // rank-0
  static Tensor eye(int n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int size() const { return static_cast<int>(node_->v.size()); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  bool is_scalar() const { return node_->v.size() == 1 && node_->shape.empty(); }

  double value() const;  // rank-0 only
  double at(const std::vector<int>& index) const;
  std::span<const double> values() const { return node_->v; }
  std::span<double> raw_values() { return node_->v; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->g.size() == node_->v.size(); }
  std::span<const double> grad() const;
  std::span<double> raw_grad();
  void zero_grad();
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  Tensor detach() const;  // copies values, drops tape and grad flag
  void backward() const;  // rank-0 only; accumulates into leaf grads

  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- operations -----------------------------------------------------------
// Elementwise binaries broadcast right-aligned (numpy rules).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 x rank-2
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& t, int axis, int start, int length);
Tensor tanh(const Tensor& t);
Tensor elu(const Tensor& t);
Tensor softplus(const Tensor& t);  // branches to identity above 20
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor square(const Tensor& t);
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, int axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, int axis);
Tensor logsumexp(const Tensor& t, int axis);  // max-subtracted
Tensor broadcast_to(const Tensor& t, const Shape& target);

// Additional primitives used by the model code.
Tensor reshape(const Tensor& t, const Shape& target);
Tensor clamp(const Tensor& t, double lo, double hi);  // zero grad outside
Tensor sigmoid(const Tensor& t);
Tensor neg(const Tensor& t);
Tensor scale(const Tensor& t, double c);
Tensor add_scalar(const Tensor& t, double c);

// Generic dispatch over the public op vocabulary, for tooling and property
// tests that sweep all ops by name. Unknown names are a contract error.
struct OpAttrs {
  std::optional<int> axis;
  Shape shape;  // broadcast target
  int start = 0;
  int length = 0;  // slice window
};
Tensor apply(const std::string& op_name, const std::vector<Tensor>& inputs,
             const OpAttrs& attrs = {});
const std::vector<std::string>& op_names();

void backward(const Tensor& output);

}  // namespace tpc
