#include "tpc/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace tpc {

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::t_grad_enabled) {
  detail::t_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { detail::t_grad_enabled = prev_; }

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

NodePtr make_node(Shape shape, std::vector<double> v) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->v = std::move(v);
  return n;
}

void check_finite(const Node& n, const char* op) {
  for (double x : n.v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
}

bool record(const std::vector<Tensor>& inputs) {
  if (!detail::grad_enabled()) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void attach(const NodePtr& out, std::initializer_list<Tensor> parents,
            std::function<void(Node&)> fn) {
  out->requires_grad = true;
  for (const Tensor& p : parents) out->parents.push_back(p.node());
  out->backward_fn = std::move(fn);
}

// Row-major strides, with 0 where the (right-aligned) input dim is broadcast.
std::vector<long> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<long> strides(out.size(), 0);
  long s = 1;
  int off = static_cast<int>(out.size() - in.size());
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    if (in[i] == out[i + off]) {
      strides[i + off] = s;
    } else if (in[i] == 1) {
      strides[i + off] = 0;
    } else {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(in) +
                       " vs " + shape_str(out));
    }
    s *= in[i];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    int da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    int db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da == db || da == 1 || db == 1) {
      out[i] = std::max(da, db);
    } else {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " do not broadcast");
    }
  }
  return out;
}

// Calls f(out_idx, a_off, b_off) for every element of out_shape.
template <class F>
void for_each_pair(const Shape& out_shape, const Shape& as, const Shape& bs,
                   F&& f) {
  int n = shape_size(out_shape);
  if (n == 0) return;
  auto sa = broadcast_strides(as, out_shape);
  auto sb = broadcast_strides(bs, out_shape);
  size_t nd = out_shape.size();
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<int> idx(nd, 0);
  long oa = 0, ob = 0;
  for (int i = 0;; ++i) {
    f(i, oa, ob);
    int k = static_cast<int>(nd) - 1;
    while (k >= 0) {
      ++idx[k];
      oa += sa[k];
      ob += sb[k];
      if (idx[k] < out_shape[k]) break;
      oa -= static_cast<long>(idx[k]) * sa[k];
      ob -= static_cast<long>(idx[k]) * sb[k];
      idx[k] = 0;
      --k;
    }
    if (k < 0) break;
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  Shape os = broadcast_shape(as, bs, name);
  std::vector<double> v(static_cast<size_t>(shape_size(os)));
  const double* pa = a.values().data();
  const double* pb = b.values().data();

  if (as == bs) {  // fast path, no index arithmetic
    size_t n = v.size();
    switch (op) {
      case BinOp::Add:
        for (size_t i = 0; i < n; ++i) v[i] = pa[i] + pb[i];
        break;
      case BinOp::Sub:
        for (size_t i = 0; i < n; ++i) v[i] = pa[i] - pb[i];
        break;
      case BinOp::Mul:
        for (size_t i = 0; i < n; ++i) v[i] = pa[i] * pb[i];
        break;
    }
  } else {
    switch (op) {
      case BinOp::Add:
        for_each_pair(os, as, bs,
                      [&](int i, long oa, long ob) { v[i] = pa[oa] + pb[ob]; });
        break;
      case BinOp::Sub:
        for_each_pair(os, as, bs,
                      [&](int i, long oa, long ob) { v[i] = pa[oa] - pb[ob]; });
        break;
      case BinOp::Mul:
        for_each_pair(os, as, bs,
                      [&](int i, long oa, long ob) { v[i] = pa[oa] * pb[ob]; });
        break;
    }
  }

  auto out = make_node(os, std::move(v));
  check_finite(*out, name);
  if (record({a, b})) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    Shape as_c = as, bs_c = bs, os_c = os;
    attach(out, {a, b}, [an, bn, as_c, bs_c, os_c, op](Node& self) {
      if (an->requires_grad) an->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      const double* g = self.g.data();
      for_each_pair(os_c, as_c, bs_c, [&](int i, long oa, long ob) {
        switch (op) {
          case BinOp::Add:
            if (an->requires_grad) an->g[oa] += g[i];
            if (bn->requires_grad) bn->g[ob] += g[i];
            break;
          case BinOp::Sub:
            if (an->requires_grad) an->g[oa] += g[i];
            if (bn->requires_grad) bn->g[ob] -= g[i];
            break;
          case BinOp::Mul:
            if (an->requires_grad) an->g[oa] += g[i] * bn->v[ob];
            if (bn->requires_grad) bn->g[ob] += g[i] * an->v[oa];
            break;
        }
      });
    });
  }
  return Tensor(out);
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& t, const char* name, Fwd fwd, Bwd dfdx) {
  std::vector<double> v(t.values().begin(), t.values().end());
  for (double& x : v) x = fwd(x);
  auto out = make_node(t.shape(), std::move(v));
  check_finite(*out, name);
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn, dfdx](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (size_t i = 0; i < self.v.size(); ++i) {
        tn->g[i] += self.g[i] * dfdx(tn->v[i], self.v[i]);
      }
    });
  }
  return Tensor(out);
}

void check_axis(const Tensor& t, int axis, const char* op) {
  if (axis < 0 || axis >= t.ndim()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(t.shape()));
  }
}

// Decompose shape around `axis` into (outer, n, inner) extents.
struct AxisSplit {
  long outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i < axis) sp.outer *= s[i];
    else if (i == axis) sp.n = s[i];
    else sp.inner *= s[i];
  }
  return sp;
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out = s;
  out.erase(out.begin() + axis);
  return out;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), 0.0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), value));
  n->requires_grad = requires_grad;
  check_finite(*n, "full");
  return Tensor(std::move(n));
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values,
                           bool requires_grad) {
  if (static_cast<int>(values.size()) != shape_size(shape)) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto n = make_node(shape, std::move(values));
  n->requires_grad = requires_grad;
  check_finite(*n, "from_values");
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

Tensor Tensor::eye(int n) {
  std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
  return from_values({n, n}, std::move(v));
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("value(): tensor of shape " + shape_str(shape()) +
                        " is not scalar");
  }
  return node_->v[0];
}

double Tensor::at(const std::vector<int>& index) const {
  if (static_cast<int>(index.size()) != ndim()) {
    throw ShapeError("at(): rank mismatch");
  }
  long off = 0;
  for (int i = 0; i < ndim(); ++i) {
    off = off * shape()[i] + index[i];
  }
  return node_->v[off];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient populated");
  return node_->g;
}

std::span<double> Tensor::raw_grad() {
  node_->ensure_grad();
  return node_->g;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->g.begin(), node_->g.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto n = make_node(node_->shape, node_->v);
  return Tensor(std::move(n));
}

void Tensor::backward() const { tpc::backward(*this); }

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }

Tensor tanh(const Tensor& t) {
  return unary_op(
      t, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& t) {
  return unary_op(
      t, "elu", [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Tensor softplus(const Tensor& t) {
  return unary_op(
      t, "softplus",
      [](double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return x > 20.0 ? 1.0 : 1.0 / (1.0 + std::exp(-x)); });
}

Tensor exp(const Tensor& t) {
  return unary_op(
      t, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& t) {
  for (double x : t.values()) {
    if (!(x > 0.0)) throw DomainError("log: input must be positive");
  }
  return unary_op(
      t, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& t) {
  return unary_op(
      t, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sigmoid(const Tensor& t) {
  return unary_op(
      t, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return unary_op(
      t, "clamp",
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor neg(const Tensor& t) { return scale(t, -1.0); }

Tensor scale(const Tensor& t, double c) {
  return unary_op(
      t, "scale", [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& t, double c) {
  return unary_op(
      t, "add_scalar", [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw ShapeError("matmul: expects rank-2 inputs, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  int m = a.shape()[0], k = a.shape()[1];
  int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  std::vector<double> v(static_cast<size_t>(m) * n);
  {
    CMap A(a.values().data(), m, k);
    CMap B(b.values().data(), k, n);
    MMap O(v.data(), m, n);
    O.noalias() = A * B;
  }
  auto out = make_node({m, n}, std::move(v));
  check_finite(*out, "matmul");
  if (record({a, b})) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    attach(out, {a, b}, [an, bn, m, k, n](Node& self) {
      CMap G(self.g.data(), m, n);
      if (an->requires_grad) {
        an->ensure_grad();
        MMap GA(an->g.data(), m, k);
        CMap B(bn->v.data(), k, n);
        GA.noalias() += G * B.transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        MMap GB(bn->g.data(), k, n);
        CMap A(an->v.data(), m, k);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return Tensor(out);
}

// ---- structure --------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  check_axis(parts[0], axis, "concat");
  Shape os = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != parts[0].ndim()) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < p.ndim(); ++i) {
      if (i != axis && p.shape()[i] != os[i]) {
        throw ShapeError("concat: shape mismatch at axis " + std::to_string(i) +
                         ": " + shape_str(p.shape()) + " vs " + shape_str(os));
      }
    }
    total += p.shape()[axis];
  }
  os[axis] = total;

  auto sp = split_axis(os, axis);
  std::vector<double> v(static_cast<size_t>(shape_size(os)));
  std::vector<long> offsets;  // per-part start along the axis
  long off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    long pn = p.shape()[axis];
    const double* src = p.values().data();
    for (long o = 0; o < sp.outer; ++o) {
      double* dst = v.data() + (o * sp.n + off) * sp.inner;
      std::copy(src + o * pn * sp.inner, src + (o + 1) * pn * sp.inner, dst);
    }
    off += pn;
  }

  auto out = make_node(os, std::move(v));
  bool rec = false;
  if (detail::grad_enabled()) {
    for (const Tensor& p : parts) rec = rec || p.requires_grad();
  }
  if (rec) {
    std::vector<Node*> pn_raw;
    std::vector<long> widths;
    out->requires_grad = true;
    for (const Tensor& p : parts) {
      out->parents.push_back(p.node());
      pn_raw.push_back(p.node().get());
      widths.push_back(p.shape()[axis]);
    }
    out->backward_fn = [pn_raw, widths, offsets, sp](Node& self) {
      for (size_t pi = 0; pi < pn_raw.size(); ++pi) {
        Node* p = pn_raw[pi];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        long w = widths[pi];
        for (long o = 0; o < sp.outer; ++o) {
          const double* g = self.g.data() + (o * sp.n + offsets[pi]) * sp.inner;
          double* dst = p->g.data() + o * w * sp.inner;
          for (long i = 0; i < w * sp.inner; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor slice(const Tensor& t, int axis, int start, int length) {
  check_axis(t, axis, "slice");
  if (start < 0 || length <= 0 || start + length > t.shape()[axis]) {
    throw ShapeError("slice: window [" + std::to_string(start) + "," +
                     std::to_string(start + length) + ") out of range for " +
                     shape_str(t.shape()));
  }
  Shape os = t.shape();
  os[axis] = length;
  auto sp = split_axis(t.shape(), axis);
  std::vector<double> v(static_cast<size_t>(shape_size(os)));
  const double* src = t.values().data();
  for (long o = 0; o < sp.outer; ++o) {
    const double* s = src + (o * sp.n + start) * sp.inner;
    std::copy(s, s + length * sp.inner, v.data() + o * length * sp.inner);
  }
  auto out = make_node(os, std::move(v));
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn, sp, start, length](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (long o = 0; o < sp.outer; ++o) {
        double* dst = tn->g.data() + (o * sp.n + start) * sp.inner;
        const double* g = self.g.data() + o * length * sp.inner;
        for (long i = 0; i < length * sp.inner; ++i) dst[i] += g[i];
      }
    });
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& t, const Shape& target) {
  if (shape_size(target) != t.size()) {
    throw ShapeError("reshape: size " + std::to_string(t.size()) +
                     " incompatible with " + shape_str(target));
  }
  std::vector<double> v(t.values().begin(), t.values().end());
  auto out = make_node(target, std::move(v));
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (size_t i = 0; i < self.v.size(); ++i) tn->g[i] += self.g[i];
    });
  }
  return Tensor(out);
}

Tensor broadcast_to(const Tensor& t, const Shape& target) {
  // validate
  (void)broadcast_strides(t.shape(), target);
  std::vector<double> v(static_cast<size_t>(shape_size(target)));
  const double* src = t.values().data();
  for_each_pair(target, t.shape(), t.shape(),
                [&](int i, long oa, long) { v[i] = src[oa]; });
  auto out = make_node(target, std::move(v));
  if (record({t})) {
    Node* tn = t.node().get();
    Shape ts = t.shape(), os = target;
    attach(out, {t}, [tn, ts, os](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      const double* g = self.g.data();
      for_each_pair(os, ts, ts, [&](int i, long oa, long) { tn->g[oa] += g[i]; });
    });
  }
  return Tensor(out);
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.values()) acc += x;
  auto out = make_node({}, {acc});
  check_finite(*out, "sum");
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      double g = self.g[0];
      for (double& gi : tn->g) gi += g;
    });
  }
  return Tensor(out);
}

Tensor sum(const Tensor& t, int axis) {
  check_axis(t, axis, "sum");
  auto sp = split_axis(t.shape(), axis);
  std::vector<double> v(static_cast<size_t>(sp.outer * sp.inner), 0.0);
  const double* src = t.values().data();
  for (long o = 0; o < sp.outer; ++o) {
    for (long j = 0; j < sp.n; ++j) {
      const double* s = src + (o * sp.n + j) * sp.inner;
      double* dst = v.data() + o * sp.inner;
      for (long i = 0; i < sp.inner; ++i) dst[i] += s[i];
    }
  }
  auto out = make_node(drop_axis(t.shape(), axis), std::move(v));
  check_finite(*out, "sum");
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn, sp](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (long o = 0; o < sp.outer; ++o) {
        const double* g = self.g.data() + o * sp.inner;
        for (long j = 0; j < sp.n; ++j) {
          double* dst = tn->g.data() + (o * sp.n + j) * sp.inner;
          for (long i = 0; i < sp.inner; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor mean(const Tensor& t) {
  return scale(sum(t), 1.0 / static_cast<double>(t.size()));
}

Tensor mean(const Tensor& t, int axis) {
  check_axis(t, axis, "mean");
  return scale(sum(t, axis), 1.0 / static_cast<double>(t.shape()[axis]));
}

Tensor logsumexp(const Tensor& t, int axis) {
  check_axis(t, axis, "logsumexp");
  auto sp = split_axis(t.shape(), axis);
  std::vector<double> v(static_cast<size_t>(sp.outer * sp.inner));
  const double* src = t.values().data();
  for (long o = 0; o < sp.outer; ++o) {
    for (long i = 0; i < sp.inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (long j = 0; j < sp.n; ++j) {
        m = std::max(m, src[(o * sp.n + j) * sp.inner + i]);
      }
      double acc = 0.0;
      for (long j = 0; j < sp.n; ++j) {
        acc += std::exp(src[(o * sp.n + j) * sp.inner + i] - m);
      }
      v[o * sp.inner + i] = m + std::log(acc);
    }
  }
  auto out = make_node(drop_axis(t.shape(), axis), std::move(v));
  check_finite(*out, "logsumexp");
  if (record({t})) {
    Node* tn = t.node().get();
    attach(out, {t}, [tn, sp](Node& self) {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (long o = 0; o < sp.outer; ++o) {
        for (long i = 0; i < sp.inner; ++i) {
          double lse = self.v[o * sp.inner + i];
          double g = self.g[o * sp.inner + i];
          for (long j = 0; j < sp.n; ++j) {
            long k = (o * sp.n + j) * sp.inner + i;
            tn->g[k] += g * std::exp(tn->v[k] - lse);
          }
        }
      }
    });
  }
  return Tensor(out);
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& output) {
  if (!output.defined()) throw ContractError("backward: undefined tensor");
  if (output.size() != 1) {
    throw ContractError("backward: output must be scalar, got shape " +
                        shape_str(output.shape()));
  }
  NodePtr root = output.node();
  if (!root->requires_grad) return;  // nothing on the tape depends on leaves

  // Post-order over parents gives a topological order (parents first).
  std::vector<Node*> topo;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  root->visited = true;
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (!p->visited && p->requires_grad) {
        p->visited = true;
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  // Interior grads are per-call scratch; leaf grads accumulate across calls.
  for (Node* n : topo) {
    n->visited = false;
    if (!n->parents.empty()) {
      n->ensure_grad();
      std::fill(n->g.begin(), n->g.end(), 0.0);
    }
  }
  root->ensure_grad();
  root->g[0] += 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }

  for (Node* n : topo) {
    if (n->parents.empty()) continue;
    for (double g : n->g) {
      if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient");
    }
  }
}

// ---- generic dispatch -------------------------------------------------------

const std::vector<std::string>& op_names() {
  static const std::vector<std::string> names = {
      "add",  "sub", "mul",  "matmul", "concat",    "slice",
      "tanh", "elu", "softplus", "exp", "log",      "square",
      "sum",  "mean", "logsumexp", "broadcast"};
  return names;
}

Tensor apply(const std::string& op_name, const std::vector<Tensor>& inputs,
             const OpAttrs& attrs) {
  auto want = [&](size_t n) {
    if (inputs.size() != n) {
      throw ContractError("apply(" + op_name + "): expected " +
                          std::to_string(n) + " inputs, got " +
                          std::to_string(inputs.size()));
    }
  };
  auto axis = [&]() -> int {
    if (!attrs.axis) {
      throw ContractError("apply(" + op_name + "): axis attribute required");
    }
    return *attrs.axis;
  };

  if (op_name == "add") { want(2); return add(inputs[0], inputs[1]); }
  if (op_name == "sub") { want(2); return sub(inputs[0], inputs[1]); }
  if (op_name == "mul") { want(2); return mul(inputs[0], inputs[1]); }
  if (op_name == "matmul") { want(2); return matmul(inputs[0], inputs[1]); }
  if (op_name == "concat") { return concat(inputs, axis()); }
  if (op_name == "slice") {
    want(1);
    return slice(inputs[0], axis(), attrs.start, attrs.length);
  }
  if (op_name == "tanh") { want(1); return tanh(inputs[0]); }
  if (op_name == "elu") { want(1); return elu(inputs[0]); }
  if (op_name == "softplus") { want(1); return softplus(inputs[0]); }
  if (op_name == "exp") { want(1); return exp(inputs[0]); }
  if (op_name == "log") { want(1); return log(inputs[0]); }
  if (op_name == "square") { want(1); return square(inputs[0]); }
  if (op_name == "sum") {
    want(1);
    return attrs.axis ? sum(inputs[0], *attrs.axis) : sum(inputs[0]);
  }
  if (op_name == "mean") {
    want(1);
    return attrs.axis ? mean(inputs[0], *attrs.axis) : mean(inputs[0]);
  }
  if (op_name == "logsumexp") { want(1); return logsumexp(inputs[0], axis()); }
  if (op_name == "broadcast") { want(1); return broadcast_to(inputs[0], attrs.shape); }

  std::string known;
  for (const auto& n : op_names()) known += (known.empty() ? "" : ", ") + n;
  throw ContractError("apply: unknown op '" + op_name + "' (known: " + known + ")");
}

}  // namespace tpc
