#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "xlij/tape.hpp"

using namespace xlij;
using xlij::testing::fd_all_coords;
using xlij::testing::random_mat;
using Id = Tape<double>::Id;

namespace {

// Scalar-loop matmul oracle, independent of the tape kernels.
Mat<double> matmul_oracle(const Mat<double>& a, const Mat<double>& b) {
  Mat<double> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0;
      for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("linear matches loop oracle and bias broadcast") {
  std::mt19937_64 rng(1);
  auto x = random_mat(5, 3, rng);
  auto w = random_mat(3, 4, rng);
  auto b = random_mat(1, 4, rng);
  Tape<double> t;
  Id y = t.linear(t.input(x), t.input(w), t.input(b));
  auto expect = matmul_oracle(x, w);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) expect.at(i, j) += b.at(0, j);
  CHECK(max_abs_diff(t.val(y), expect) < 1e-14);
}

TEST_CASE("every op passes exhaustive finite differences") {
  std::mt19937_64 rng(7);
  ParamStore<double> store(3);
  auto& x = store.add("x", 4, 6, init::fan_in);
  auto& w = store.add("w", 6, 6, init::fan_in);
  auto& b = store.add("b", 1, 6, init::zeros);
  auto& g = store.add("g", 1, 6, init::ones);
  auto& q = store.add("q", 1, 6, init::fan_in);
  auto& gate = store.add("gate", 1, 1, init::zeros);
  gate.value.data[0] = 0.3;
  auto& table = store.add("table", 5, 6, init::embedding);

  SUBCASE("linear + gelu + layer_norm + add + scale") {
    auto build = [&](Tape<double>& t) {
      Id xv = t.leaf(x.value, &x.grad);
      Id h = t.linear(xv, t.leaf(w.value, &w.grad), t.leaf(b.value, &b.grad));
      h = t.gelu(h);
      h = t.layer_norm(h, t.leaf(g.value, &g.grad), t.leaf(b.value, &b.grad));
      h = t.add(h, t.scale(xv, 0.5));
      return t.cross_entropy(h, {0, 2}, {1, 4});
    };
    CHECK(fd_all_coords(store, build) < 1e-6);
  }

  SUBCASE("attention causal and probe-style single query") {
    auto build = [&](Tape<double>& t) {
      Id xv = t.leaf(x.value, &x.grad);
      Id wv = t.leaf(w.value, &w.grad);
      Id k = t.linear(xv, wv);
      Id att = t.attention(k, k, xv, 2, true);
      Id probe = t.attention(t.leaf(q.value, &q.grad), att, att, 2, false);
      Id both = t.concat_rows(att, probe);
      return t.cross_entropy(both, {1, 4}, {0, 3});
    };
    CHECK(fd_all_coords(store, build) < 1e-6);
  }

  SUBCASE("sigmoid gate + masked_add + embed + concat_cols") {
    auto& gw = store.add("gw", 12, 1, init::fan_in);
    auto build = [&](Tape<double>& t) {
      Id xv = t.leaf(x.value, &x.grad);
      Id qv = t.leaf(q.value, &q.grad);
      Id pair = t.concat_cols(qv, qv);
      Id s = t.sigmoid(t.linear(pair, t.leaf(gw.value, &gw.grad), t.leaf(gate.value, &gate.grad)));
      Id h = t.masked_add(xv, t.embed(t.leaf(table.value, &table.grad), {2, 4}), {1, 3}, s);
      return t.cross_entropy(h, {1, 3}, {2, 5});
    };
    CHECK(fd_all_coords(store, build) < 1e-6);
  }
}

TEST_CASE("cross entropy value matches scalar softmax/log oracle") {
  std::mt19937_64 rng(11);
  auto logits = random_mat(3, 5, rng, 2.0);
  std::vector<int> pos = {0, 2};
  std::vector<int> tgt = {4, 1};
  Tape<double> t;
  Id loss = t.cross_entropy(t.input(logits), pos, tgt);

  double expect = 0;
  for (size_t i = 0; i < pos.size(); ++i) {
    double denom = 0;
    for (int j = 0; j < 5; ++j) denom += std::exp(logits.at(pos[i], j));
    expect += -std::log(std::exp(logits.at(pos[i], tgt[i])) / denom);
  }
  expect /= 2.0;
  CHECK(std::abs(t.val(loss).data[0] - expect) < 1e-12);
}

TEST_CASE("cross entropy uniform logits give ln(vocab)") {
  Tape<double> t;
  Id loss = t.cross_entropy(t.input(Mat<double>::filled(2, 7, 0.42)), {0, 1}, {3, 6});
  CHECK(t.val(loss).data[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects empty supervision") {
  Tape<double> t;
  Id logits = t.input(Mat<double>::filled(2, 4, 0.0));
  CHECK_THROWS_WITH_AS(t.cross_entropy(logits, {}, {}), doctest::Contains("empty answer mask"),
                       error);
}

TEST_CASE("masked_add with zero gate is bit identical") {
  std::mt19937_64 rng(5);
  auto h = random_mat(6, 4, rng);
  auto v = random_mat(2, 4, rng);
  Mat<double> zero(1, 1);
  Tape<double> t;
  Id out = t.masked_add(t.input(h), t.input(v), {0, 3}, t.input(zero));
  CHECK(bitwise_equal(t.val(out), h));
}

TEST_CASE("masked_add shape mismatch raises injection-shape error") {
  Tape<double> t;
  Id h = t.input(Mat<double>(6, 4));
  Id v = t.input(Mat<double>(3, 4));
  CHECK_THROWS_AS(t.masked_add(h, v, {0, 1}), error);
}

TEST_CASE("attention single key/value ignores the query") {
  std::mt19937_64 rng(9);
  auto token = random_mat(1, 6, rng);
  for (int trial = 0; trial < 3; ++trial) {
    auto q = random_mat(1, 6, rng, 3.0);
    Tape<double> t;
    Id out = t.attention(t.input(q), t.input(token), t.input(token), 2, false);
    CHECK(max_abs_diff(t.val(out), token) < 1e-15);
  }
}

TEST_CASE("frozen leaves keep exactly zero grad while grads flow through") {
  ParamStore<double> store(4);
  auto& x = store.add("x", 2, 3, init::fan_in);
  auto& w_frozen = store.add("w_frozen", 3, 3, init::fan_in, /*trainable=*/false);

  Tape<double> t;
  Id h = t.linear(t.leaf(x.value, &x.grad), t.leaf(w_frozen.value, nullptr));
  Id loss = t.cross_entropy(h, {0}, {1});
  t.backward(loss);

  bool x_touched = false;
  for (double g : x.grad.data) x_touched |= g != 0.0;
  CHECK(x_touched);
  for (double g : w_frozen.grad.data) CHECK(g == 0.0);
}
