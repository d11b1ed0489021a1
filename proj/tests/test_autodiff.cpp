#include <doctest.h>

#include <cmath>

#include "wscl/autodiff.hpp"

using namespace wscl;
using ad::Graph;
using ad::Tensor;

TEST_CASE("primitive forward values") {
  Graph g;
  SUBCASE("matmul 1x2 by 2x1") {
    Tensor a = g.constant({1, 2}, {1, 2});
    Tensor b = g.constant({2, 1}, {3, 4});
    CHECK(ad::matmul(a, b).value() == core::Vec{11});
  }
  SUBCASE("sigmoid at zero") {
    CHECK(ad::sigmoid(g.constant({1}, {0.0})).scalar() == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("abs forward and backward at a negative input") {
    Tensor x = g.leaf({1}, {-3.5}, true);
    Tensor y = ad::abs(x);
    CHECK(y.scalar() == 3.5);
    g.backward(y);
    CHECK(x.grad()[0] == -1.0);
  }
  SUBCASE("abs subgradient at zero is zero") {
    Tensor x = g.leaf({1}, {0.0}, true);
    Tensor y = ad::abs(x);
    g.backward(y);
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("concat on the last axis") {
    Tensor a = g.constant({2, 1}, {1, 2});
    Tensor b = g.constant({2, 2}, {3, 4, 5, 6});
    Tensor c = ad::concat(a, b);
    CHECK(c.shape() == ad::Shape{2, 3});
    CHECK(c.value() == core::Vec{1, 3, 4, 2, 5, 6});
  }
}

TEST_CASE("shape mismatches are rejected with a diagnostic") {
  Graph g;
  Tensor a = g.constant({2, 3}, core::Vec(6, 0.0));
  Tensor b = g.constant({2, 2}, core::Vec(4, 0.0));
  CHECK_THROWS_WITH_AS(ad::add(a, b), "add: shape mismatch [2,3] vs [2,2]", core::InputError);
  CHECK_THROWS_AS(ad::matmul(a, b), core::InputError);
  CHECK_THROWS_AS(ad::add_bias(a, g.constant({2}, {0, 0})), core::InputError);
}

TEST_CASE("backward basics") {
  SUBCASE("sum of squares") {
    Graph g;
    Tensor x = g.leaf({3}, {1, 2, 3}, true);
    Tensor y = ad::sum(ad::square(x));
    g.backward(y);
    CHECK(x.grad() == core::Vec{2, 4, 6});
  }
  SUBCASE("mean spreads the gradient") {
    Graph g;
    Tensor x = g.leaf({4}, {1, 2, 3, 4}, true);
    g.backward(ad::mean(x));
    CHECK(x.grad() == core::Vec{0.25, 0.25, 0.25, 0.25});
  }
  SUBCASE("tanh gradient at zero") {
    Graph g;
    Tensor x = g.leaf({1}, {0.0}, true);
    Tensor y = ad::tanh(x);
    g.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("non-scalar root rejected") {
    Graph g;
    Tensor x = g.leaf({2}, {1, 2}, true);
    CHECK_THROWS_AS(g.backward(x), core::InputError);
  }
  SUBCASE("repeated backward accumulates; zero_grad resets") {
    Graph g;
    Tensor x = g.leaf({2}, {1, 2}, true);
    Tensor y = ad::sum(ad::square(x));
    g.backward(y);
    g.backward(y);
    CHECK(x.grad() == core::Vec{4, 8});
    g.zero_grad();
    g.backward(y);
    CHECK(x.grad() == core::Vec{2, 4});
  }
  SUBCASE("no gradient flows into frozen leaves") {
    Graph g;
    Tensor x = g.leaf({2}, {1, 2}, true);
    Tensor w = g.leaf({2}, {3, 4}, false);
    g.backward(ad::sum(ad::mul(x, w)));
    CHECK(x.grad() == core::Vec{3, 4});
    CHECK(w.grad() == core::Vec{0, 0});
  }
}

TEST_CASE("grad_check validates simple functions") {
  SUBCASE("x squared at 3") {
    auto f = [](Graph& g, const Tensor& x) { return ad::sum(ad::square(x)); };
    ad::GradCheckReport rep = ad::grad_check(f, {3.0});
    CHECK(rep.skipped.empty());
    CHECK(rep.max_rel_err <= 1e-8);
  }
  SUBCASE("abs at 0 is flagged as a kink and skip-listed") {
    auto f = [](Graph& g, const Tensor& x) { return ad::sum(ad::abs(x)); };
    ad::GradCheckReport rep = ad::grad_check(f, {0.0});
    REQUIRE(rep.skipped.size() == 1);
    CHECK(rep.skipped[0] == 0);
    CHECK(rep.max_rel_err == 0.0);
  }
  SUBCASE("log at a non-positive probe reports a non-finite coordinate") {
    auto f = [](Graph& g, const Tensor& x) { return ad::sum(ad::log(x)); };
    ad::GradCheckReport rep = ad::grad_check(f, {1e-6}, 1e-5);
    CHECK(!rep.nonfinite.empty());
    CHECK(!rep.pass(1e-4));
  }
}

namespace {

// A smooth composite touching every differentiable primitive; x is one row.
ad::Tensor composite(Graph& g, const Tensor& x) {
  Tensor m = g.leaf({8, 3}, {0.31,  -0.22, 0.55,  0.12,  0.44, -0.61, -0.73, 0.28,
                             0.33,  0.51,  -0.14, 0.26,  0.09, -0.37, 0.41,  -0.18,
                             0.22,  0.05,  -0.29, 0.47,  0.16, -0.52, 0.38,  0.07},
                    false);
  Tensor b = g.leaf({3}, {0.1, -0.2, 0.3}, false);
  Tensor h = ad::tanh(ad::add_bias(ad::matmul(x, m), b));  // [1,3]
  Tensor s = ad::sigmoid(ad::scale(h, 0.7));
  Tensor q = ad::mul(ad::square(h), s);
  Tensor c = ad::concat(q, ad::sub(s, ad::scale(h, 0.25)));  // [1,6]
  Tensor lg = ad::log(
      ad::clamp(ad::add(ad::square(c), g.constant({1, 6}, core::Vec(6, 0.5))), 1e-6, 1e6));
  return ad::add(ad::mean(lg), ad::scale(ad::sum(ad::abs(h)), 0.01));
}

}  // namespace

TEST_CASE("analytic gradients match central differences on random points") {
  // Away from kinks, every primitive's gradient agrees with finite
  // differences to 1e-6 relative error.
  core::Rng rng(1234);
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    core::Vec x = rng.uniform_vec(8, -1.5, 1.5);
    ad::GradCheckReport rep = ad::grad_check(composite, x, 1e-5);
    REQUIRE(rep.nonfinite.empty());
    if (!rep.skipped.empty()) continue;  // rare kink crossing in abs
    CHECK(rep.max_rel_err <= 1e-6);
    ++checked;
  }
  CHECK(checked >= 95);
}

TEST_CASE("backward is linear: grad of a sum equals sum of grads") {
  core::Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    core::Vec x = rng.uniform_vec(6, -2.0, 2.0);

    auto build_a = [](Graph& g, const Tensor& t) { return ad::mean(ad::square(t)); };
    auto build_b = [](Graph& g, const Tensor& t) { return ad::sum(ad::tanh(ad::scale(t, 0.5))); };

    Graph g1;
    Tensor t1 = g1.leaf({6}, x, true);
    g1.backward(ad::add(build_a(g1, t1), build_b(g1, t1)));
    core::Vec combined = t1.grad();

    Graph g2;
    Tensor t2 = g2.leaf({6}, x, true);
    g2.backward(build_a(g2, t2));
    core::Vec ga = t2.grad();
    g2.zero_grad();
    g2.backward(build_b(g2, t2));
    core::Vec gb = t2.grad();

    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(std::fabs(combined[i] - (ga[i] + gb[i])) <= 1e-12);
  }
}

TEST_CASE("graph evaluation is deterministic") {
  core::Rng rng(7);
  core::Vec x = rng.uniform_vec(8, -1, 1);
  auto run = [&] {
    Graph g;
    Tensor t = g.leaf({8}, x, true);
    Tensor y = composite(g, t);
    g.backward(y);
    core::Vec out = t.grad();
    out.push_back(y.scalar());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("node ids increase and parents precede children") {
  Graph g;
  Tensor a = g.constant({2}, {1, 2});
  Tensor b = g.constant({2}, {3, 4});
  Tensor c = ad::add(a, b);
  Tensor d = ad::sum(c);
  CHECK(a.id() < c.id());
  CHECK(b.id() < c.id());
  CHECK(c.id() < d.id());
  CHECK(g.node_count() == 4);
}
