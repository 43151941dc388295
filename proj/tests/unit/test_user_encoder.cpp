#include <doctest.h>

#include <cmath>

#include "awrs/error.hpp"
#include "awrs/user_encoder.hpp"
#include "model_support.hpp"

using namespace awrs;
using namespace testing_support;

namespace {

struct Fixture {
  ad::ParameterStore<double> store;
  std::mt19937_64 rng;
  UserEncoder<double> enc;

  explicit Fixture(UserEncoderConfig c = {6, 2, 1, 5}, std::uint64_t seed = 3)
      : rng(seed), enc(c, store, rng) {}
};

Tensor<double> rows_of(const Tensor<double>& t, std::initializer_list<std::size_t> which) {
  Tensor<double> out({which.size(), t.cols()});
  std::size_t i = 0;
  for (auto r : which) {
    std::copy(t.row(r).begin(), t.row(r).end(), out.row(i++).begin());
  }
  return out;
}

}  // namespace

TEST_CASE("candidate-aware self-attention") {
  SUBCASE("single item: each head returns its output projection") {
    Fixture f;
    ad::Tape<double> tape;
    auto h = tape.constant(random_tensor(1, 6, 1));
    auto c = tape.constant(random_tensor(1, 6, 2));
    const auto hist = f.enc.prepare(tape, h);
    const auto l = f.enc.self_attention(tape, hist, c).value();
    auto expect = ad::concat_cols({ad::matmul(h, tape.leaf(f.enc.head_output(0))),
                                   ad::matmul(h, tape.leaf(f.enc.head_output(1)))});
    CHECK(max_abs_diff(l, expect.value()) < 1e-12);
  }
  SUBCASE("two-item toy against a hand-computed table") {
    Fixture f({3, 1, 0, 4});
    for (auto* p : {&f.enc.history_query(), &f.enc.candidate_query(), &f.enc.relatedness(0),
                    &f.enc.head_output(0)}) {
      set_identity(*p);
    }
    ad::Tape<double> tape;
    // h1 = e1, h2 = e2 + e3, candidate = e3.
    // r11 = 1 + 0, r12 = 0 + 1, r21 = 0 + 0, r22 = 2 + 1.
    auto h = tape.constant(Tensor<double>(2, 3, {1, 0, 0, 0, 1, 1}));
    auto c = tape.constant(Tensor<double>(1, 3, {0, 0, 1}));
    AttentionProbe<double> probe;
    const auto hist = f.enc.prepare(tape, h);
    const auto l = f.enc.self_attention(tape, hist, c, &probe).value();
    const double g21 = 1 / (1 + std::exp(3.0)), g22 = 1 - g21;
    const auto& gamma = probe.entries.at(0).weights.value();
    CHECK(gamma.at(0, 0) == doctest::Approx(0.5));
    CHECK(gamma.at(0, 1) == doctest::Approx(0.5));
    CHECK(gamma.at(1, 0) == doctest::Approx(g21));
    CHECK(gamma.at(1, 1) == doctest::Approx(g22));
    CHECK(max_abs_diff(l, Tensor<double>(2, 3, {0.5, 0.5, 0.5, g21, g22, g22})) < 1e-12);
  }
  SUBCASE("rows sum to one and ignore masked slots") {
    Fixture f;
    ad::Tape<double> tape;
    AttentionProbe<double> probe;
    const ad::Mask mask{1, 0, 1, 1};
    const auto hist = f.enc.prepare(tape, tape.constant(random_tensor(4, 6, 3)), mask);
    f.enc.self_attention(tape, hist, tape.constant(random_tensor(1, 6, 4)), &probe);
    REQUIRE(probe.entries.size() == 2);
    for (const auto& e : probe.entries) {
      const auto& w = e.weights.value();
      for (std::size_t r = 0; r < 4; ++r) {
        CHECK(w.at(r, 1) == 0.0);
        CHECK(w.at(r, 0) + w.at(r, 1) + w.at(r, 2) + w.at(r, 3) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
  SUBCASE("shifting all relatedness scores leaves the output unchanged") {
    Fixture f;
    ad::Tape<double> tape;
    auto c = tape.constant(random_tensor(1, 6, 6));
    auto hist = f.enc.prepare(tape, tape.constant(random_tensor(3, 6, 5)));
    const auto base = f.enc.self_attention(tape, hist, c).value();
    for (auto& s : hist.self_scores) s = ad::add_scalar(s, 7.25);
    CHECK(max_abs_diff(base, f.enc.self_attention(tape, hist, c).value()) < 1e-12);
  }
}

TEST_CASE("candidate-aware CNN") {
  SUBCASE("window 0 sees only the item and the candidate") {
    Fixture f({6, 2, 0, 5});
    ad::Tape<double> tape;
    auto items = random_tensor(3, 6, 1);
    auto c = tape.constant(random_tensor(1, 6, 2));
    const auto s = f.enc.cnn(tape, f.enc.prepare(tape, tape.constant(items)), c).value();
    auto other = items;
    for (auto& v : other.row(0)) v += 1.0;
    for (auto& v : other.row(2)) v -= 1.0;
    const auto s2 = f.enc.cnn(tape, f.enc.prepare(tape, tape.constant(other)), c).value();
    CHECK(max_abs_diff(rows_of(s, {1}), rows_of(s2, {1})) == 0.0);
  }
  SUBCASE("boundary windows pad with zeros") {
    Fixture f;
    ad::Tape<double> tape;
    auto items = random_tensor(3, 6, 3);
    auto c = tape.constant(random_tensor(1, 6, 4));
    const auto s = f.enc.cnn(tape, f.enc.prepare(tape, tape.constant(items)), c).value();
    // Direct recomputation of s_0 = relu([0, h0, h1] W + c W_c + b).
    Tensor<double> window({1, 18});
    std::copy(items.row(0).begin(), items.row(0).end(), window.data.begin() + 6);
    std::copy(items.row(1).begin(), items.row(1).end(), window.data.begin() + 12);
    auto direct = ad::relu(ad::add(ad::matmul(tape.constant(window), tape.leaf(f.store.at("user.cnn.window"))),
                                   ad::affine(c, tape.leaf(f.store.at("user.cnn.candidate")),
                                              tape.leaf(f.store.at("user.cnn.bias")))));
    CHECK(max_abs_diff(rows_of(s, {0}), direct.value()) < 1e-12);
  }
  SUBCASE("translation shifts interior positions") {
    Fixture f;
    ad::Tape<double> tape;
    auto items = random_tensor(5, 6, 7);
    auto c = tape.constant(random_tensor(1, 6, 8));
    Tensor<double> shifted({5, 6});
    auto extra = random_tensor(1, 6, 9);
    std::copy(extra.data.begin(), extra.data.end(), shifted.data.begin());
    std::copy(items.data.begin(), items.data.end() - 6, shifted.data.begin() + 6);
    const auto a = f.enc.cnn(tape, f.enc.prepare(tape, tape.constant(items)), c).value();
    const auto b = f.enc.cnn(tape, f.enc.prepare(tape, tape.constant(shifted)), c).value();
    // Positions whose whole window survives the shift reappear one slot later.
    for (std::size_t i = 1; i <= 2; ++i) {
      CHECK(max_abs_diff(rows_of(a, {i}), rows_of(b, {i + 1})) < 1e-12);
    }
  }
}

TEST_CASE("user embedding and interest") {
  SUBCASE("single item gives u_aw = m_1") {
    Fixture f;
    ad::Tape<double> tape;
    auto c = tape.constant(random_tensor(1, 6, 1));
    const auto hist = f.enc.prepare(tape, tape.constant(random_tensor(1, 6, 2)));
    auto l = f.enc.self_attention(tape, hist, c);
    auto s = f.enc.cnn(tape, hist, c);
    AttentionProbe<double> probe;
    const auto u = f.enc.user_embedding(tape, hist, l, s, c, &probe).value();
    auto m = ad::relu(ad::affine(ad::concat_cols({s, l}), tape.leaf(f.store.at("user.phi1.weight")),
                                 tape.leaf(f.store.at("user.phi1.bias"))));
    CHECK(max_abs_diff(u, m.value()) < 1e-12);
    CHECK(probe.entries.at(0).weights.value().data == std::vector<double>{1.0});
  }
  SUBCASE("duplicated rows split attention evenly and keep u_aw") {
    Fixture f;
    ad::Tape<double> tape;
    auto c = tape.constant(random_tensor(1, 6, 3));
    auto s = random_tensor(2, 6, 4), l = random_tensor(2, 6, 5);
    auto twice = [](const Tensor<double>& t) { return rows_of(t, {0, 1, 0, 1}); };
    const auto h2 = f.enc.prepare(tape, tape.constant(random_tensor(2, 6, 6)));
    const auto h4 = f.enc.prepare(tape, tape.constant(random_tensor(4, 6, 6)));
    AttentionProbe<double> p2, p4;
    const auto u2 = f.enc.user_embedding(tape, h2, tape.constant(l), tape.constant(s), c, &p2).value();
    const auto u4 =
        f.enc.user_embedding(tape, h4, tape.constant(twice(l)), tape.constant(twice(s)), c, &p4).value();
    CHECK(max_abs_diff(u2, u4) < 1e-12);
    const auto& a2 = p2.entries.at(0).weights.value().data;
    const auto& a4 = p4.entries.at(0).weights.value().data;
    CHECK(a4[0] == doctest::Approx(a2[0] / 2));
    CHECK(a4[2] == doctest::Approx(a2[0] / 2));
    CHECK(a4[1] == doctest::Approx(a2[1] / 2));
    CHECK(a4[3] == doctest::Approx(a2[1] / 2));
  }
  SUBCASE("zero eta weights average the two scores") {
    Fixture f;
    set_zero(f.enc.eta_weight());
    set_zero(f.enc.eta_bias());
    ad::Tape<double> tape;
    auto c = tape.constant(random_tensor(1, 6, 1));
    auto u = tape.constant(random_tensor(1, 6, 2));
    auto r = tape.constant(Tensor<double>(1, 1, {0.3}));
    const auto out = f.enc.interest(tape, c, u, r);
    CHECK(out.eta.item() == 0.5);
    CHECK(out.score.item() == doctest::Approx((0.3 + out.preliminary.item()) / 2));
  }
  SUBCASE("score is a convex combination") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Fixture f({6, 2, 1, 5}, seed);
      ad::Tape<double> tape;
      const auto hist = f.enc.prepare(tape, tape.constant(random_tensor(4, 6, seed + 100)));
      const double r = 0.1 + 0.8 * static_cast<double>(seed % 7) / 6;
      const auto out = f.enc.score(tape, hist, tape.constant(random_tensor(1, 6, seed + 200)),
                                   tape.constant(Tensor<double>(1, 1, {r})));
      const double p = out.preliminary.item(), s = out.score.item();
      CHECK(s >= std::min(r, p) - 1e-12);
      CHECK(s <= std::max(r, p) + 1e-12);
    }
  }
  SUBCASE("masked slot contents never matter") {
    Fixture f;
    const ad::Mask mask{1, 1, 0, 1};
    auto items = random_tensor(4, 6, 1);
    auto other = items;
    for (auto& v : other.row(2)) v = 42.0;
    ad::Tape<double> tape;
    auto c = tape.constant(random_tensor(1, 6, 2));
    auto r = tape.constant(Tensor<double>(1, 1, {0.4}));
    const auto a = f.enc.score(tape, f.enc.prepare(tape, tape.constant(items), mask), c, r);
    const auto b = f.enc.score(tape, f.enc.prepare(tape, tape.constant(other), mask), c, r);
    CHECK(a.user.value().data == b.user.value().data);
    CHECK(a.score.item() == b.score.item());
  }
  SUBCASE("errors") {
    Fixture f;
    ad::Tape<double> tape;
    CHECK_THROWS_AS(f.enc.prepare(tape, tape.constant(random_tensor(2, 6, 1)), ad::Mask{0, 0}), Error);
    CHECK_THROWS_AS(f.enc.prepare(tape, tape.constant(random_tensor(2, 5, 1))), ShapeError);
    CHECK_THROWS_AS(f.enc.prepare(tape, tape.constant(random_tensor(2, 6, 1)), ad::Mask{1}), ShapeError);
    ad::ParameterStore<double> s;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(UserEncoder<double>({6, 4, 1, 5}, s, rng), Error);
  }
}

TEST_CASE("user encoder end-to-end gradient check") {
  Fixture f({6, 2, 1, 5}, 21);
  ad::ParameterStore<double> inputs;
  auto& items = inputs.add("items", {3, 6});
  auto& cand = inputs.add("candidate", {1, 6});
  items.value() = random_tensor(3, 6, 1);
  cand.value() = random_tensor(1, 6, 2);
  auto params = f.store.all();
  params.push_back(&items);
  params.push_back(&cand);
  const auto r = ad::grad_check<double>(
      [&](ad::Tape<double>& t) {
        const auto hist = f.enc.prepare(t, t.leaf(items), ad::Mask{1, 0, 1});
        return f.enc.score(t, hist, t.leaf(cand), t.constant(Tensor<double>(1, 1, {0.7}))).score;
      },
      params, 1e-5, 8, 2);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-3);
}
