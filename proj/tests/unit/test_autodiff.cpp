#include <doctest.h>

#include <cmath>

#include "awrs/autodiff.hpp"
#include "awrs/error.hpp"

using namespace awrs;
using namespace awrs::ad;

namespace {

using T = Tensor<double>;

Parameter<double>& param(ParameterStore<double>& s, const std::string& name, std::size_t r,
                         std::size_t c, std::uint64_t seed, bool sparse = false) {
  auto& p = s.add(name, {r, c}, sparse);
  std::mt19937_64 rng(seed);
  init_uniform(p, 1.0, rng);
  return p;
}

void check_grads(ParameterStore<double>& s, const std::function<Var<double>(Tape<double>&)>& fn) {
  auto ps = s.all();
  const auto r = grad_check<double>(fn, ps, 1e-6);
  INFO("worst " << r.worst << " err " << r.max_relative_error);
  CHECK(r.coordinates > 0);
  CHECK(r.max_relative_error < 1e-6);
}

}  // namespace

TEST_CASE("forward examples") {
  Tape<double> tape;
  auto a = tape.constant(T(2, 2, {1, 2, 3, 4}));
  auto b = tape.constant(T(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value().data == std::vector<double>{19, 22, 43, 50});
  CHECK(matmul_transposed(a, b).value().data == std::vector<double>{17, 23, 39, 53});
  CHECK(transpose(a).value().data == std::vector<double>{1, 3, 2, 4});
  CHECK(mul(a, b).value().data == std::vector<double>{5, 12, 21, 32});
  CHECK(relu(tape.constant(T(1, 3, {-1, 0, 2}))).value().data == std::vector<double>{0, 0, 2});
  CHECK(sigmoid(tape.constant(T(1, 1, {0}))).item() == 0.5);
  CHECK(one_minus(tape.constant(T(1, 1, {0.25}))).item() == 0.75);

  auto sm = softmax_rows(tape.constant(T(1, 3, {0, 0, 0})));
  for (double v : sm.value().data) CHECK(v == doctest::Approx(1.0 / 3));
  auto masked = softmax_rows(tape.constant(T(1, 3, {5, 1, 1})), Mask{0, 1, 1});
  CHECK(masked.value().data == std::vector<double>{0, 0.5, 0.5});
  auto dead = softmax_rows(tape.constant(T(1, 2, {1, 2})), Mask{0, 0});
  CHECK(dead.value().data == std::vector<double>{0, 0});
  // Large logits stay finite.
  auto big = softmax_rows(tape.constant(T(1, 2, {1000, 1000})));
  CHECK(big.value().data == std::vector<double>{0.5, 0.5});

  auto ce = softmax_cross_entropy(tape.constant(T(1, 2, {0, 0})), 0);
  CHECK(ce.item() == doctest::Approx(std::log(2.0)));

  auto win = sliding_window_concat(tape.constant(T(3, 1, {1, 2, 3})), 1);
  CHECK(win.shape() == Shape{3, 3});
  CHECK(win.value().data == std::vector<double>{0, 1, 2, 1, 2, 3, 2, 3, 0});

  auto tiled = tile_rows(tape.constant(T(1, 2, {1, 2})), 3);
  CHECK(tiled.value().data == std::vector<double>{1, 2, 1, 2, 1, 2});
  CHECK(slice_cols(a, 1, 2).value().data == std::vector<double>{2, 4});
  CHECK(slice_rows(a, 1, 2).value().data == std::vector<double>{3, 4});
  CHECK(concat_cols({a, b}).value().data == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
  CHECK(sum(a).item() == 10);
}

TEST_CASE("gradients match central differences") {
  SUBCASE("matmul chain with bias, tanh and softmax") {
    ParameterStore<double> s;
    auto& x = param(s, "x", 3, 4, 1);
    auto& w = param(s, "w", 4, 2, 2);
    auto& b = param(s, "b", 1, 2, 3);
    check_grads(s, [&](Tape<double>& t) {
      auto h = tanh(affine(t.leaf(x), t.leaf(w), t.leaf(b)));
      return softmax_cross_entropy(transpose(slice_cols(h, 0, 1)), 1);
    });
  }
  SUBCASE("masked softmax and elementwise ops") {
    ParameterStore<double> s;
    auto& a = param(s, "a", 2, 4, 4);
    auto& c = param(s, "c", 2, 4, 5);
    check_grads(s, [&](Tape<double>& t) {
      auto p = softmax_rows(mul(t.leaf(a), t.leaf(c)), Mask{1, 0, 1, 1});
      auto q = sigmoid(sub(exp(t.leaf(a)), scale(t.leaf(c), 0.5)));
      return sum(add(mul(p, q), sin(add_scalar(one_minus(t.leaf(c)), 0.3))));
    });
  }
  SUBCASE("structure ops") {
    ParameterStore<double> s;
    auto& a = param(s, "a", 4, 3, 6);
    auto& r = param(s, "r", 1, 3, 7);
    auto& w = param(s, "w", 9, 2, 8);
    check_grads(s, [&](Tape<double>& t) {
      auto win = sliding_window_concat(t.leaf(a), 1);
      auto y = relu(matmul(win, t.leaf(w)));
      auto z = concat_rows<double>(std::vector{slice_rows(t.leaf(a), 1, 3), tile_rows(t.leaf(r), 2)});
      return add(sum(mul(y, y)), sum(matmul_transposed(z, z)));
    });
  }
  SUBCASE("embedding lookup with repeated rows") {
    ParameterStore<double> s;
    auto& table = param(s, "table", 5, 3, 9, true);
    auto& w = param(s, "w", 3, 1, 10);
    check_grads(s, [&](Tape<double>& t) {
      const std::int32_t idx[] = {4, 1, 4};
      return sum(tanh(matmul(embedding_lookup(t, table, idx), t.leaf(w))));
    });
  }
}

TEST_CASE("embedding gradient touches only looked-up rows") {
  ParameterStore<double> s;
  auto& table = param(s, "table", 6, 2, 1, true);
  Tape<double> tape;
  const std::int32_t idx[] = {2, 2, 5};
  tape.backward(sum(embedding_lookup(tape, table, idx)));
  CHECK(table.touched_rows().size() == 2);
  for (std::size_t r = 0; r < 6; ++r) {
    const double expect = r == 2 ? 2.0 : r == 5 ? 1.0 : 0.0;
    CHECK(table.grad().at(r, 0) == expect);
    CHECK(table.grad().at(r, 1) == expect);
  }
  table.zero_grad();
  CHECK(table.touched_rows().empty());
  for (double g : table.grad().data) CHECK(g == 0.0);
}

TEST_CASE("gradients accumulate across tapes") {
  ParameterStore<double> s;
  auto& w = s.add("w", {1, 1});
  w.value().data[0] = 3.0;
  for (int i = 0; i < 2; ++i) {
    Tape<double> t;
    t.backward(mul(t.leaf(w), t.leaf(w)));
  }
  CHECK(w.grad().data[0] == 12.0);
}

TEST_CASE("errors") {
  Tape<double> tape;
  auto a = tape.constant(T(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, transpose(a)), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  CHECK_THROWS_AS(a.item(), ShapeError);
  CHECK_THROWS_AS(T(2, 2, {1, 2, 3}), ShapeError);
  ParameterStore<double> s;
  auto& table = s.add("t", {2, 2}, true);
  CHECK_THROWS_AS(tape.leaf(table), Error);
  const std::int32_t bad[] = {2};
  CHECK_THROWS_AS(embedding_lookup(tape, table, bad), Error);
  CHECK_THROWS_AS(s.add("t", {1, 1}), Error);
  CHECK_THROWS_AS(s.at("missing"), Error);
  Tape<double> other;
  CHECK_THROWS_AS(other.backward(sum(a)), Error);
}

TEST_CASE("float instantiation agrees with double") {
  Tape<float> tf;
  Tape<double> td;
  auto f = softmax_rows(tf.constant(Tensor<float>(1, 3, {0.1f, 0.7f, -0.2f})));
  auto d = softmax_rows(td.constant(T(1, 3, {0.1, 0.7, -0.2})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(f.value().data[i] == doctest::Approx(d.value().data[i]).epsilon(1e-6));
}
