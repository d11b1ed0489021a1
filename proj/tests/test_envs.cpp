#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "wscl/envs.hpp"

using namespace wscl;

namespace {

double norm2(const core::Vec& a, const core::Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

core::Vec neg(const core::Vec& v) {
  core::Vec out = v;
  for (auto& x : out) x = -x;
  return out;
}

}  // namespace

TEST_CASE("make_pair rejects bad inputs") {
  CHECK_THROWS_AS(envs::make_pair("nope"), core::ConfigError);
  CHECK_THROWS_AS(envs::make_pair("gain", {{"g", -1.0}}), core::ConfigError);
  CHECK_THROWS_AS(envs::make_pair("scaled", {{"g", 2.0}}), core::ConfigError);
}

TEST_CASE("scaled pair satisfies the correspondence identity") {
  envs::MdpPair pair = envs::make_pair("scaled");
  REQUIRE(pair.gt.has_value());
  core::Rng rng(42);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const core::Vec s = rng.uniform_vec(2, -1, 1);
    const core::Vec a = rng.uniform_vec(2, -2, 2);
    const core::Vec lhs = pair.gt->phi(pair.m1.transition(s, a));
    const core::Vec rhs = pair.m2.transition(pair.gt->phi(s), pair.gt->h1(s, a));
    worst = std::max(worst, norm2(lhs, rhs));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("domain-cycle identity holds at ground truth") {
  for (const char* name : {"scaled", "gain", "mirror"}) {
    envs::MdpPair pair = envs::make_pair(name);
    core::Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      const core::Vec s = rng.uniform_vec(2, -1, 1);
      const core::Vec a = rng.uniform_vec(2, -2, 2);
      const core::Vec back = pair.gt->h2(pair.gt->phi(s), pair.gt->h1(s, a));
      CHECK(norm2(back, a) <= 1e-12);
    }
  }
}

TEST_CASE("mirror pair: the sign-flipped map is also a perfect solution") {
  envs::MdpPair pair = envs::make_pair("mirror");
  core::Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const core::Vec s = rng.uniform_vec(2, -1, 1);
    const core::Vec a = rng.uniform_vec(2, -2, 2);
    // Phi(s) = -s with H1(a) = -a: dynamics-cycle residual stays zero.
    const core::Vec lhs = neg(pair.m1.transition(s, a));
    const core::Vec rhs = pair.m2.transition(neg(s), neg(a));
    CHECK(norm2(lhs, rhs) <= 1e-12);
  }
}

TEST_CASE("gain g=1 reduces to identical MDPs with identity maps") {
  envs::MdpPair pair = envs::make_pair("gain", {{"g", 1.0}});
  core::Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const core::Vec s = rng.uniform_vec(2, -1, 1);
    const core::Vec a = rng.uniform_vec(2, -2, 2);
    CHECK(pair.gt->phi(s) == s);
    CHECK(pair.gt->h1(s, a) == a);
    CHECK(norm2(pair.m1.transition(s, a), pair.m2.transition(s, a)) == 0.0);
  }
}

TEST_CASE("step arithmetic") {
  envs::MdpPair pair = envs::make_pair("scaled");
  SUBCASE("m1 integrator") {
    const core::Vec next = envs::step(pair.m1, {0, 0}, {1, 1});
    CHECK(next[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(next[1] == doctest::Approx(0.1).epsilon(1e-15));
  }
  SUBCASE("m2 applies the actuation gain") {
    const core::Vec next = envs::step(pair.m2, {0, 0}, {1, 1});
    CHECK(next[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(next[1] == doctest::Approx(0.1).epsilon(1e-15));
  }
  SUBCASE("non-finite inputs are rejected") {
    CHECK_THROWS_AS(envs::step(pair.m1, {std::nan(""), 0}, {0, 0}), core::NumericalError);
    CHECK_THROWS_AS(envs::step(pair.m1, {0, 0}, {1e400 / 1e10, 0}), core::NumericalError);
  }
  SUBCASE("arm with zero action keeps its angles") {
    envs::MdpPair arm = envs::make_pair("arm");
    const core::Vec s{0.3, -0.2, 0.5, 0.4, 0.1};
    const core::Vec next = envs::step(arm.m1, s, {0, 0, 0});
    CHECK(next == s);
  }
}

TEST_CASE("arm end effector of a straight arm lies on the x axis") {
  const core::Vec ee = envs::arm_end_effector({0.0, 0.0, 0.0, 0.5, 0.5}, 3, 0.5);
  CHECK(ee[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(ee[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("scripted policies") {
  envs::MdpPair pair = envs::make_pair("scaled");

  SUBCASE("oracle beats the random policy from (1,0)") {
    double oracle_total = 0.0, random_total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      envs::Policy oracle = envs::scripted_policy(pair, 2, 1.0, seed);
      envs::Policy random = envs::scripted_policy(pair, 2, 0.0, seed);
      oracle_total += envs::rollout(pair.m2, oracle, {1, 0}, 50).ret;
      random_total += envs::rollout(pair.m2, random, {1, 0}, 50).ret;
    }
    CHECK(oracle_total > random_total);
  }

  SUBCASE("same seed reproduces the action sequence") {
    envs::Policy p1 = envs::scripted_policy(pair, 1, 0.0, 99);
    envs::Policy p2 = envs::scripted_policy(pair, 1, 0.0, 99);
    envs::Trajectory t1 = envs::rollout(pair.m1, p1, {0.5, 0.5}, 10);
    envs::Trajectory t2 = envs::rollout(pair.m1, p2, {0.5, 0.5}, 10);
    for (std::size_t i = 0; i < t1.actions.size(); ++i) CHECK(t1.actions[i] == t2.actions[i]);
  }

  SUBCASE("the 7-rung ladder yields distinct ascending mean returns") {
    std::vector<double> means;
    for (int r = 0; r < 7; ++r) {
      const double q = static_cast<double>(r) / 6.0;
      double total = 0.0;
      core::Rng rng(1000 + r);
      for (int e = 0; e < 40; ++e) {
        envs::Policy p = envs::scripted_policy(pair, 2, q, rng.next_u64());
        core::Vec s0 = pair.m2.init_state(rng);
        total += envs::rollout(pair.m2, p, s0, 50).ret;
      }
      means.push_back(total / 40.0);
    }
    for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] > means[i - 1]);
  }

  SUBCASE("quality outside [0,1] is rejected") {
    CHECK_THROWS_AS(envs::scripted_policy(pair, 1, 1.5, 0), core::InputError);
    CHECK_THROWS_AS(envs::scripted_policy(pair, 3, 0.5, 0), core::InputError);
  }
}

TEST_CASE("rollout") {
  envs::MdpPair pair = envs::make_pair("scaled");

  SUBCASE("horizon one gives two states and one action") {
    envs::Policy p = envs::scripted_policy(pair, 1, 0.5, 1);
    envs::Trajectory t = envs::rollout(pair.m1, p, {0.2, 0.2}, 1);
    CHECK(t.states.size() == 2);
    CHECK(t.actions.size() == 1);
    CHECK_THROWS_AS(envs::rollout(pair.m1, p, {0, 0}, 0), core::InputError);
  }

  SUBCASE("zero policy on the integrator stays put") {
    envs::Policy zero{0.0, [](const core::Vec&) { return core::Vec{0, 0}; }};
    envs::Trajectory t = envs::rollout(pair.m1, zero, {0.6, -0.3}, 20);
    for (const auto& s : t.states) CHECK(s == core::Vec{0.6, -0.3});
    CHECK(t.ret ==
          doctest::Approx(20.0 * pair.m1.reward({0.6, -0.3}, {0, 0})).epsilon(1e-12));
  }

  SUBCASE("states satisfy the transition exactly") {
    envs::Policy p = envs::scripted_policy(pair, 1, 0.4, 17);
    envs::Trajectory t = envs::rollout(pair.m1, p, {0.9, -0.9}, 30);
    for (std::size_t i = 0; i < t.actions.size(); ++i)
      CHECK(norm2(t.states[i + 1], pair.m1.transition(t.states[i], t.actions[i])) == 0.0);
  }

  SUBCASE("oracle reaches the goal on scaled m2") {
    envs::Policy oracle = envs::scripted_policy(pair, 2, 1.0, 4);
    envs::Trajectory t = envs::rollout(pair.m2, oracle, {1, 1}, 50);
    CHECK(norm2(t.states.back(), {0, 0}) < 0.05);
  }

  SUBCASE("non-finite policy output aborts the rollout") {
    envs::Policy bad{0.0, [](const core::Vec&) { return core::Vec{std::nan(""), 0}; }};
    CHECK_THROWS_AS(envs::rollout(pair.m1, bad, {0, 0}, 5), core::NumericalError);
  }

  SUBCASE("identical seeds give identical trajectories") {
    core::Rng ra(123), rb(123);
    envs::Policy pa = envs::scripted_policy(pair, 2, 0.3, 55);
    envs::Policy pb = envs::scripted_policy(pair, 2, 0.3, 55);
    core::Vec sa = pair.m2.init_state(ra), sb = pair.m2.init_state(rb);
    CHECK(sa == sb);
    envs::Trajectory ta = envs::rollout(pair.m2, pa, sa, 25);
    envs::Trajectory tb = envs::rollout(pair.m2, pb, sb, 25);
    CHECK(ta.states == tb.states);
    CHECK(ta.ret == tb.ret);
  }
}

TEST_CASE("jacobian-transpose control moves the arm toward its goal") {
  envs::MdpPair arm = envs::make_pair("arm");
  core::Rng rng(31);
  int improved = 0;
  for (int e = 0; e < 20; ++e) {
    core::Vec s0 = arm.m2.init_state(rng);
    envs::Policy oracle = envs::scripted_policy(arm, 2, 1.0, rng.next_u64());
    envs::Trajectory t = envs::rollout(arm.m2, oracle, s0, 60);
    const core::Vec goal{s0[2], s0[3]};
    const double d0 = norm2(envs::arm_end_effector(s0, 2, 0.75), goal);
    const double d1 = norm2(envs::arm_end_effector(t.states.back(), 2, 0.75), goal);
    if (d1 < 0.5 * d0 || d1 < 0.05) ++improved;
  }
  CHECK(improved >= 18);
}
