#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "wscl/nn.hpp"

using namespace wscl;

TEST_CASE("mlp init is deterministic and correctly sized") {
  nn::Mlp a("m", "state-map", {2, 8, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 7);
  nn::Mlp b("m", "state-map", {2, 8, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 7);
  CHECK(a.params() == b.params());
  CHECK(a.param_count() == 42);  // 2*8+8 + 8*2+2

  nn::Mlp c("m", "state-map", {2, 8, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 8);
  CHECK(a.params() != c.params());

  CHECK_THROWS_AS(
      nn::Mlp("bad", "r", {2, 0, 1}, nn::Activation::Tanh, nn::OutputActivation::Identity, 1),
      core::InputError);
  CHECK_THROWS_AS(nn::Mlp("bad", "r", {2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 1),
                  core::InputError);
}

TEST_CASE("all-zero-weight net forward is the final bias") {
  nn::Mlp net("m", "r", {3, 5, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 3);
  net.set_params(core::Vec(net.param_count(), 0.0));
  core::Vec out = net.forward_value(core::Vec{0.4, -0.7, 1.1});
  CHECK(out == core::Vec{0.0, 0.0});
}

TEST_CASE("graph forward matches value forward") {
  core::Rng rng(11);
  nn::Mlp net("m", "r", {3, 6, 6, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 5);
  core::Mat x(4, 3);
  x.v = rng.uniform_vec(12, -1, 1);
  ad::Graph g;
  ad::Tensor y = net.forward(g, g.constant(x), false);
  core::Mat yv = net.forward_value(x);
  for (std::size_t i = 0; i < yv.v.size(); ++i)
    CHECK(y.value()[i] == doctest::Approx(yv.v[i]).epsilon(1e-15));
}

TEST_CASE("sigmoid-headed outputs stay strictly inside (0,1)") {
  nn::Mlp disc("d", "disc-state", {2, 6, 1}, nn::Activation::Relu, nn::OutputActivation::Sigmoid,
               13);
  core::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const double p = disc.forward_value(rng.uniform_vec(2, -50, 50))[0];
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("weight perturbation matches the analytic jacobian-vector product") {
  nn::Mlp net("m", "r", {2, 8, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 17);
  const core::Vec x{0.3, -0.8};
  const core::Vec probe{0.7, -0.4};
  const double delta = 1e-6;

  // d(probe . f(x)) / d(theta) via backward.
  ad::Graph g;
  nn::MlpBinding binding;
  ad::Tensor y = net.forward(g, g.constant({1, 2}, x), true, &binding);
  ad::Tensor scalar = ad::sum(ad::mul(y, g.constant({1, 2}, probe)));
  g.backward(scalar);
  const core::Vec grad = nn::Mlp::gradients(binding);

  core::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t i = rng.index(net.param_count());
    nn::Mlp bumped = net;
    bumped.params()[i] += delta;
    const core::Vec y0 = net.forward_value(x);
    const core::Vec y1 = bumped.forward_value(x);
    const double fd = (probe[0] * (y1[0] - y0[0]) + probe[1] * (y1[1] - y0[1])) / delta;
    CHECK(fd == doctest::Approx(grad[i]).epsilon(1e-4));
  }
}

TEST_CASE("adam first-step size is the learning rate under bias correction") {
  nn::Adam adam(1, {1e-3, 0.9, 0.999, 1e-8});
  core::Vec theta{0.0};
  adam.step(theta, {1.0});
  CHECK(std::fabs(theta[0] + 9.99999990e-4) < 1e-9);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  nn::Adam adam(3, {});
  core::Vec theta{1.0, -2.0, 0.5};
  const core::Vec before = theta;
  for (int i = 0; i < 5; ++i) adam.step(theta, {0.0, 0.0, 0.0});
  CHECK(theta == before);
}

TEST_CASE("adam descends a scalar quadratic") {
  // Oracle: run the descent itself; (theta-3)^2 from 0 must reach 3.
  nn::Adam adam(1, {0.05, 0.9, 0.999, 1e-8});
  core::Vec theta{0.0};
  for (int i = 0; i < 1000; ++i) adam.step(theta, {2.0 * (theta[0] - 3.0)});
  CHECK(std::fabs(theta[0] - 3.0) < 1e-2);
}

TEST_CASE("adam skips a non-finite gradient and logs the event") {
  nn::Adam adam(2, {});
  core::Vec theta{1.0, 2.0};
  const core::Vec before = theta;
  CHECK_FALSE(adam.step(theta, {std::nan(""), 1.0}));
  CHECK(theta == before);
  CHECK(adam.skipped() == 1);
  CHECK(adam.t() == 0);
}

TEST_CASE("similarity net is asymmetric in its arguments") {
  nn::SimilarityNet net("sim", "sim-state-0", 2, 2, 8, 8, 77);
  core::Rng rng(5);
  std::size_t differing = 0;
  for (int i = 0; i < 20; ++i) {
    const core::Vec a = rng.uniform_vec(2, -1, 1), b = rng.uniform_vec(2, -1, 1);
    if (std::fabs(net.forward_value(a, b) - net.forward_value(b, a)) > 1e-9) ++differing;
  }
  CHECK(differing >= 19);
  CHECK(net.encoder1().out_dim() == net.encoder2().out_dim());
  CHECK(net.head().in_dim() == 2 * net.encoder1().out_dim());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  nn::Mlp a("state-map", "state-map", {2, 6, 2}, nn::Activation::Tanh,
            nn::OutputActivation::Identity, 21);
  nn::Mlp b("disc-state", "disc-state", {2, 4, 1}, nn::Activation::Relu,
            nn::OutputActivation::Sigmoid, 22);
  const std::string path = "ckpt_roundtrip.bin";
  nn::save_checkpoint({&a, &b}, path, {"phase2", "deadbeef", "scaled;dims=2,2,2,2"});
  nn::LoadedCheckpoint loaded = nn::load_checkpoint(path);
  REQUIRE(loaded.nets.size() == 2);
  CHECK(loaded.meta.phase == "phase2");
  CHECK(loaded.meta.config_hash == "deadbeef");
  CHECK(loaded.meta.pair_signature == "scaled;dims=2,2,2,2");
  const nn::Mlp* la = loaded.find("state-map");
  REQUIRE(la != nullptr);
  CHECK(la->params() == a.params());
  CHECK(la->hidden_activation() == nn::Activation::Tanh);

  core::Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const core::Vec x = rng.uniform_vec(2, -2, 2);
    CHECK(la->forward_value(x) == a.forward_value(x));
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption is rejected") {
  nn::Mlp a("m", "state-map", {2, 8, 2}, nn::Activation::Tanh, nn::OutputActivation::Identity, 1);
  const std::string path = "ckpt_corrupt.bin";
  nn::save_checkpoint({&a}, path, {});

  auto slurp = [&] {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  auto spit = [&](const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  const std::string original = slurp();

  SUBCASE("manifest edited to a wrong layer size") {
    std::string bytes = original;
    const auto pos = bytes.find("[2,8,2]");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 7, "[2,9,2]");
    spit(bytes);
    CHECK_THROWS_AS(nn::load_checkpoint(path), core::InputError);
  }
  SUBCASE("truncated payload") {
    spit(original.substr(0, original.size() - 16));
    CHECK_THROWS_AS(nn::load_checkpoint(path), core::InputError);
  }
  SUBCASE("version mismatch") {
    std::string bytes = original;
    bytes[4] = 9;  // little-endian u32 version
    spit(bytes);
    CHECK_THROWS_AS(nn::load_checkpoint(path), core::InputError);
  }
  SUBCASE("bad magic") {
    std::string bytes = original;
    bytes[0] = 'X';
    spit(bytes);
    CHECK_THROWS_AS(nn::load_checkpoint(path), core::InputError);
  }
  std::remove(path.c_str());
}
