#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"
#include "tpc/rng.hpp"
#include "tpc/tensor.hpp"

using namespace tpc;
using tpc::testing::max_grad_rel_err;

TEST_CASE("matmul identity returns the input") {
  Rng rng(1);
  Tensor x = Tensor::from_values({3, 4}, rng.normal_vec(12));
  Tensor y = matmul(Tensor::eye(3), x);
  for (int i = 0; i < 12; ++i) {
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("logsumexp of [0, 0] is ln 2") {
  Tensor t = Tensor::from_values({2}, {0.0, 0.0});
  CHECK(logsumexp(t, 0).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("logsumexp is stable for large inputs") {
  Tensor t = Tensor::from_values({2}, {1000.0, 1000.0});
  CHECK(logsumexp(t, 0).value() ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("tanh gradient at 0.5 matches finite differences") {
  Tensor x = Tensor::from_values({}, {0.5}, true);
  double err = max_grad_rel_err([&] { return tanh(x); }, {x});
  CHECK(err < 1e-6);
}

TEST_CASE("d/dx x^2 at x=3 is 6") {
  Tensor x = Tensor::from_values({}, {3.0}, true);
  Tensor y = square(x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient of logsumexp equals softmax of inputs") {
  Rng rng(7);
  Tensor x = Tensor::from_values({5}, rng.normal_vec(5), true);
  Tensor y = logsumexp(x, 0);
  backward(y);
  double lse = y.value();
  for (int i = 0; i < 5; ++i) {
    CHECK(x.grad()[i] ==
          doctest::Approx(std::exp(x.values()[i] - lse)).epsilon(1e-10));
  }
}

TEST_CASE("three-layer dense network gradients match finite differences") {
  Rng rng(42);
  ParamStore store;
  Dense l1(store, "l1", 6, 8, rng);
  Dense l2(store, "l2", 8, 8, rng);
  Dense l3(store, "l3", 8, 1, rng);
  Tensor x = Tensor::from_values({4, 6}, rng.normal_vec(24));
  auto f = [&] { return mean(l3(tanh(l2(elu(l1(x)))))); };
  double err = max_grad_rel_err(f, store.all());
  CHECK(err < 1e-4);
}

TEST_CASE("every differentiable op matches finite differences on random inputs") {
  Rng rng(123);
  struct Case {
    const char* name;
    int arity;
    OpAttrs attrs;
  };
  std::vector<Case> cases = {
      {"add", 2, {}},      {"sub", 2, {}},      {"mul", 2, {}},
      {"matmul", 2, {}},   {"tanh", 1, {}},     {"elu", 1, {}},
      {"softplus", 1, {}}, {"exp", 1, {}},      {"log", 1, {}},
      {"square", 1, {}},   {"sum", 1, {}},      {"mean", 1, {}},
      {"logsumexp", 1, OpAttrs{.axis = 1}},
      {"sum_axis", 1, OpAttrs{.axis = 0}},
      {"mean_axis", 1, OpAttrs{.axis = 1}},
      {"concat", 2, OpAttrs{.axis = 1}},
      {"slice", 1, OpAttrs{.axis = 1, .start = 1, .length = 2}},
      {"broadcast", 1, OpAttrs{.shape = {2, 3, 4}}},
  };
  int checked = 0;
  for (const auto& c : cases) {
    std::string op = c.name;
    if (op == "sum_axis") op = "sum";
    if (op == "mean_axis") op = "mean";
    for (int rep = 0; rep < 6; ++rep) {
      std::vector<Tensor> inputs;
      for (int i = 0; i < c.arity; ++i) {
        Shape shape = {3, 4};
        std::vector<double> v = rng.normal_vec(12);
        if (op == "log") {
          for (double& x : v) x = std::fabs(x) + 0.5;
        }
        if (std::string(c.name) == "broadcast") shape = {3, 4};
        inputs.push_back(Tensor::from_values(shape, std::move(v), true));
      }
      if (std::string(c.name) == "broadcast") {
        OpAttrs a = c.attrs;
        a.shape = {2, 3, 4};
        auto f = [&] { return sum(apply(op, inputs, a)); };
        CHECK(max_grad_rel_err(f, inputs) < 1e-4);
      } else {
        auto f = [&] { return sum(apply(op, inputs, c.attrs)); };
        CHECK(max_grad_rel_err(f, inputs) < 1e-4);
      }
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("broadcast add of a bias row") {
  Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_values({3}, {10, 20, 30}, true);
  Tensor y = add(x, b);
  CHECK(y.at({1, 2}) == doctest::Approx(36.0));
  backward(sum(y));
  for (int i = 0; i < 3; ++i) CHECK(b.grad()[i] == doctest::Approx(2.0));
}

TEST_CASE("backward on a sum of losses equals the sum of separate backwards") {
  Rng rng(5);
  Tensor x = Tensor::from_values({4}, rng.normal_vec(4), true);
  auto la = [&] { return sum(square(x)); };
  auto lb = [&] { return mean(tanh(x)); };

  x.zero_grad();
  backward(add(la(), lb()));
  std::vector<double> combined(x.grad().begin(), x.grad().end());

  x.zero_grad();
  backward(la());
  backward(lb());  // accumulates additively
  for (int i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(combined[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradients accumulate across uses of the same tensor") {
  Tensor x = Tensor::from_values({}, {2.0}, true);
  Tensor y = add(mul(x, x), x);  // x^2 + x -> dy/dx = 2x + 1 = 5
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(5.0));
}

TEST_CASE("shape errors are descriptive") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 5), ShapeError);
  CHECK_THROWS_AS(reshape(a, {7}), ShapeError);
}

TEST_CASE("domain errors for log") {
  CHECK_THROWS_AS(log(Tensor::from_values({2}, {1.0, -1.0})), DomainError);
  CHECK_THROWS_AS(log(Tensor::from_values({1}, {0.0})), DomainError);
}

TEST_CASE("non-finite results are an error state") {
  Tensor big = Tensor::from_values({1}, {1e308});
  CHECK_THROWS_AS(exp(big), NumericError);
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("backward requires a scalar output") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor y = square(x);
  CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("apply rejects unknown op names") {
  CHECK_THROWS_AS(apply("convolve", {Tensor::zeros({2, 2})}, {}), ContractError);
}

TEST_CASE("no tape is recorded without requires_grad") {
  Tensor x = Tensor::from_values({3}, {1, 2, 3});
  Tensor y = tanh(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
  NoGradGuard ng;
  Tensor y = tanh(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("identical seeds give bit-identical forward values") {
  auto run = [] {
    Rng rng(99);
    ParamStore store;
    Dense l1(store, "l", 5, 7, rng);
    Tensor x = Tensor::from_values({3, 5}, rng.normal_vec(15));
    return elu(l1(x));
  };
  Tensor a = run();
  Tensor b = run();
  for (int i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("clamp passes gradient only inside the window") {
  Tensor x = Tensor::from_values({3}, {-10.0, 0.5, 10.0}, true);
  Tensor y = clamp(x, -5.0, 2.0);
  CHECK(y.values()[0] == -5.0);
  CHECK(y.values()[1] == 0.5);
  CHECK(y.values()[2] == 2.0);
  backward(sum(y));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}
