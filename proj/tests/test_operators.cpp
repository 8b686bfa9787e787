#include <cmath>

#include "davt/operators.hpp"
#include "davt/rng.hpp"
#include "doctest.h"

using namespace davt;

namespace {

Observation make_pair(std::vector<double> x, std::vector<double> y) {
  Observation z;
  z.tag = Tag::kPair;
  z.shape = {2, x.size()};
  z.data = x;
  z.data.insert(z.data.end(), y.begin(), y.end());
  return z;
}

Observation random_pair(Rng& rng, std::size_t k) {
  std::vector<double> x(k), y(k);
  for (auto& v : x) v = rng.next_gaussian();
  for (auto& v : y) v = rng.next_gaussian();
  return make_pair(x, y);
}

Observation random_glyph(Rng& rng, std::size_t s) {
  Observation g;
  g.tag = Tag::kPlain;
  g.shape = {s, s};
  for (std::size_t i = 0; i < s * s; ++i) g.data.push_back(std::floor(rng.next_double() * 2.0));
  return g;
}

}  // namespace

TEST_CASE("swap exchanges the two components") {
  Observation z = make_pair({1, 2}, {3, 4});
  Observation s = Operator::swap_halves().apply(z);
  CHECK(s.data == std::vector<double>{3, 4, 1, 2});
  CHECK(s.tag == Tag::kPair);
}

TEST_CASE("swap is an involution and operators are pure") {
  Rng rng(3);
  Operator sw = Operator::swap_halves();
  for (int rep = 0; rep < 50; ++rep) {
    Observation z = random_pair(rng, 3);
    Observation once = sw.apply(z);
    CHECK(sw.apply(once).data == z.data);
  }

  // purity: 1000 applications to the same observation are bit-identical
  Observation z = random_pair(rng, 4);
  Observation glyph = random_glyph(rng, 6);
  Observation first_swap = sw.apply(z);
  Observation first_rot = Operator::rotate(90).apply(glyph);
  Observation first_flip = Operator::flip().apply(glyph);
  for (int i = 0; i < 1000; ++i) {
    CHECK(sw.apply(z).data == first_swap.data);
    CHECK(Operator::rotate(90).apply(glyph).data == first_rot.data);
    CHECK(Operator::flip().apply(glyph).data == first_flip.data);
  }
}

TEST_CASE("rotations form the cyclic group on square grids") {
  Rng rng(5);
  Observation g = random_glyph(rng, 8);
  CHECK(Operator::rotate(360).apply(g).data == g.data);
  Observation r90twice = Operator::rotate(90).apply(Operator::rotate(90).apply(g));
  CHECK(r90twice.data == Operator::rotate(180).apply(g).data);
  for (int a : {90, 180, 270, 360}) {
    for (int b : {90, 180, 270, 360}) {
      Observation lhs = Operator::rotate(a).apply(Operator::rotate(b).apply(g));
      Observation rhs = Operator::rotate((a + b) % 360).apply(g);
      CHECK(lhs.data == rhs.data);
    }
  }
}

TEST_CASE("rotate(90) is a counterclockwise quarter turn") {
  Observation g;
  g.tag = Tag::kPlain;
  g.shape = {2, 2};
  g.data = {1, 2,
            3, 4};
  // counterclockwise: top-right goes to top-left
  CHECK(Operator::rotate(90).apply(g).data == std::vector<double>{2, 4, 1, 3});
}

TEST_CASE("cross_swap exchanges the second elements of two pairs") {
  Observation z;
  z.tag = Tag::kPairOfPairs;
  z.shape = {2, 2, 1};
  z.data = {1, 2, 3, 4};  // ((x1, y1), (x2, y2))
  CHECK(Operator::cross_swap().apply(z).data == std::vector<double>{1, 4, 3, 2});
}

TEST_CASE("project_first returns the first component") {
  Observation z = make_pair({1, 2}, {3, 4});
  Observation p = Operator::project_first().apply(z);
  CHECK(p.data == std::vector<double>{1, 2});
  CHECK(p.tag == Tag::kPlain);
  CHECK(p.shape == std::vector<std::size_t>{2});

  // project_first(swap(z)) is the second component
  Observation q = Operator::project_first().apply(Operator::swap_halves().apply(z));
  CHECK(q.data == std::vector<double>{3, 4});
}

TEST_CASE("compose(project_first, swap) picks the second component on random pairs") {
  Rng rng(11);
  Operator proj_swap = Operator::compose({Operator::project_first(), Operator::swap_halves()});
  for (int rep = 0; rep < 100; ++rep) {
    Observation z = random_pair(rng, 4);
    Observation out = proj_swap.apply(z);
    // direct evaluation oracle: the second half of the data
    std::vector<double> expected(z.data.begin() + 4, z.data.end());
    CHECK(out.data == expected);
  }
}

TEST_CASE("flip negates plain observations and rejects pairs") {
  Observation x;
  x.tag = Tag::kPlain;
  x.shape = {3};
  x.data = {1.5, -2.0, 0.0};
  CHECK(Operator::flip().apply(x).data == std::vector<double>{-1.5, 2.0, -0.0});
  Observation z = make_pair({1}, {2});
  CHECK_THROWS_AS(Operator::flip().apply(z), std::invalid_argument);
}

TEST_CASE("tag mismatches are rejected") {
  Observation g;
  g.tag = Tag::kPlain;
  g.shape = {2, 3};
  g.data = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(Operator::swap_halves().apply(g), std::invalid_argument);
  CHECK_THROWS_AS(Operator::rotate(90).apply(g), std::invalid_argument);  // not square
  Observation z = make_pair({1, 2}, {3, 4});
  CHECK_THROWS_AS(Operator::cross_swap().apply(z), std::invalid_argument);
}

TEST_CASE("identical operator arguments give zero payoff") {
  Rng rng(17);
  PayoffModel m = init_payoff_model({4, 6, 1}, Normalization::kNone, 0.45, 21);
  for (int rep = 0; rep < 20; ++rep) {
    Observation z = random_pair(rng, 2);
    CHECK(payoff_difference(m, z, Operator::identity(), Operator::identity()) == 0.0);
  }
}

TEST_CASE("payoff difference matches independent re-evaluation") {
  Rng rng(19);
  Operator t1 = Operator::compose({Operator::project_first(), Operator::swap_halves()});
  Operator t2 = Operator::project_first();
  for (int rep = 0; rep < 50; ++rep) {
    PayoffModel m = init_payoff_model({2, 5, 1}, Normalization::kLayerNorm, 0.45, rng.next_u64());
    Observation z = random_pair(rng, 2);
    double payoff = payoff_difference(m, z, t1, t2);
    // brute-force oracle: recompute both forward passes explicitly
    std::vector<double> y(z.data.begin() + 2, z.data.end());
    std::vector<double> x(z.data.begin(), z.data.begin() + 2);
    double expected = forward(m, y) - forward(m, x);
    CHECK(payoff == doctest::Approx(expected).epsilon(1e-14));
    CHECK(std::abs(payoff) <= 2.0 * m.q_bound);
  }
}

TEST_CASE("payoff antisymmetry for the swap null") {
  Rng rng(23);
  Operator sw = Operator::swap_halves();
  Operator id = Operator::identity();
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    PayoffModel m = init_payoff_model({4, 8, 1}, Normalization::kLayerNorm, 0.45, rng.next_u64());
    Observation z = random_pair(rng, 2);
    double a = payoff_difference(m, z, sw, id);
    double b = payoff_difference(m, sw.apply(z), sw, id);
    worst = std::max(worst, std::abs(a + b));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("averaged payoff over singleton sets reduces to the pair payoff bitwise") {
  Rng rng(29);
  Operator t1 = Operator::swap_halves();
  Operator t2 = Operator::identity();
  OperatorSet s1{{t1}}, s2{{t2}};
  for (int rep = 0; rep < 50; ++rep) {
    PayoffModel m = init_payoff_model({4, 6, 1}, Normalization::kNone, 0.45, rng.next_u64());
    Observation z = random_pair(rng, 2);
    CHECK(averaged_payoff(m, z, s1, s2) == payoff_difference(m, z, t1, t2));
  }
}

TEST_CASE("averaged payoff cancels for identical member lists") {
  Rng rng(31);
  OperatorSet s{{Operator::identity(), Operator::swap_halves()}};
  PayoffModel m = init_payoff_model({4, 6, 1}, Normalization::kNone, 0.45, 77);
  for (int rep = 0; rep < 20; ++rep) {
    Observation z = random_pair(rng, 2);
    CHECK(std::abs(averaged_payoff(m, z, s, s)) <= 1e-15);
  }
}

TEST_CASE("averaged payoff matches the explicit four-term sum for 2x2 sets") {
  Rng rng(37);
  Operator a1 = Operator::compose({Operator::rotate(90), Operator::project_first()});
  Operator a2 = Operator::compose({Operator::rotate(180), Operator::project_first()});
  Operator b1 = Operator::compose({Operator::project_first(), Operator::swap_halves()});
  Operator b2 =
      Operator::compose({Operator::rotate(270), Operator::project_first(), Operator::swap_halves()});
  OperatorSet s1{{a1, a2}}, s2{{b1, b2}};
  PayoffModel m = init_payoff_model({16, 8, 1}, Normalization::kNone, 0.45, 99);
  for (int rep = 0; rep < 20; ++rep) {
    Observation z;
    z.tag = Tag::kPair;
    z.shape = {2, 4, 4};
    for (int i = 0; i < 32; ++i) z.data.push_back(rng.next_gaussian());
    double got = averaged_payoff(m, z, s1, s2);
    // enumerate all pairs with independent arithmetic
    double expected = 0.0;
    double worst_pair = 0.0;
    for (const Operator* ta : {&a1, &a2}) {
      for (const Operator* tb : {&b1, &b2}) {
        double term = forward(m, ta->apply(z).data) - forward(m, tb->apply(z).data);
        expected += term;
        worst_pair = std::max(worst_pair, std::abs(term));
      }
    }
    expected /= 4.0;
    CHECK(got == doctest::Approx(expected).epsilon(1e-13));
    CHECK(std::abs(got) <= worst_pair + 1e-15);
  }
}

TEST_CASE("operator descriptors round-trip through JSON") {
  Operator op = Operator::compose(
      {Operator::project_first(), Operator::swap_halves(), Operator::rotate(270)});
  Operator back = Operator::from_json(nlohmann::json::parse(op.descriptor()));
  CHECK(back.descriptor() == op.descriptor());

  auto parsed = Operator::from_json(nlohmann::json::parse(
      R"({"kind":"compose","ops":[{"kind":"project_first"},{"kind":"swap"}]})"));
  Observation z = make_pair({1, 2}, {3, 4});
  CHECK(parsed.apply(z).data == std::vector<double>{3, 4});

  CHECK_THROWS_AS(Operator::from_json(nlohmann::json::parse(R"({"kind":"warp"})")),
                  std::invalid_argument);
}

TEST_CASE("operator sets must be disjoint as declared configurations") {
  OperatorSet s1{{Operator::rotate(90), Operator::rotate(180)}};
  OperatorSet s2{{Operator::rotate(180)}};
  CHECK_THROWS_AS(check_disjoint(s1, s2), std::invalid_argument);
  OperatorSet s3{{Operator::rotate(270)}};
  CHECK_NOTHROW(check_disjoint(s1, s3));
  OperatorSet empty;
  CHECK_THROWS_AS(check_disjoint(s1, empty), std::invalid_argument);
}
