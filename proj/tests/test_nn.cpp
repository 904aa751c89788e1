#include "doctest.h"
#include "test_helpers.hpp"
#include "tpc/nn.hpp"
#include "tpc/rng.hpp"

using namespace tpc;
using tpc::testing::max_grad_rel_err;

TEST_CASE("zero-weight gru is independent of its inputs") {
  Rng rng(1);
  ParamStore store;
  GruCell cell(store, "gru", 4, 6, rng);
  for (const auto& path : store.paths()) {
    auto v = store.at(path).raw_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  Tensor h = Tensor::from_values({2, 6}, rng.normal_vec(12));
  Tensor x1 = Tensor::from_values({2, 4}, rng.normal_vec(8));
  Tensor x2 = Tensor::from_values({2, 4}, rng.normal_vec(8));
  Tensor h1 = cell.step(x1, h);
  Tensor h2 = cell.step(x2, h);
  for (int i = 0; i < h1.size(); ++i) {
    CHECK(h1.values()[i] == doctest::Approx(h2.values()[i]).epsilon(1e-12));
    CHECK(h1.values()[i] == doctest::Approx(0.5 * h.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("gru gradients pass finite differences") {
  Rng rng(11);
  ParamStore store;
  GruCell cell(store, "gru", 3, 5, rng);
  Tensor x = Tensor::from_values({2, 3}, rng.normal_vec(6), true);
  Tensor h = Tensor::from_values({2, 5}, rng.normal_vec(10), true);
  std::vector<Tensor> leaves = store.all();
  leaves.push_back(x);
  leaves.push_back(h);
  auto f = [&] { return mean(cell.step(x, h)); };
  CHECK(max_grad_rel_err(f, leaves) < 1e-4);
}

TEST_CASE("param store paths are stable and unique") {
  Rng rng(2);
  ParamStore store;
  Dense d(store, "enc/l1", 3, 4, rng);
  CHECK(store.contains("enc/l1/w"));
  CHECK(store.contains("enc/l1/b"));
  CHECK_THROWS_AS(Dense(store, "enc/l1", 3, 4, rng), ContractError);
  CHECK(store.paths().size() == 2);
}

TEST_CASE("copy_values_from makes an exact copy") {
  Rng rng(3);
  ParamStore a, b;
  Dense da(a, "l", 3, 3, rng);
  Dense db(b, "l", 3, 3, rng);
  b.copy_values_from(a);
  for (int i = 0; i < da.w.size(); ++i) {
    CHECK(db.w.values()[i] == da.w.values()[i]);
  }
}

TEST_CASE("dense layer validates input width") {
  Rng rng(4);
  ParamStore store;
  Dense d(store, "l", 3, 2, rng);
  CHECK_THROWS_AS(d(Tensor::zeros({5, 4})), ShapeError);
}
