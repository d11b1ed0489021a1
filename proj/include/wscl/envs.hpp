#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wscl/core.hpp"

namespace wscl::envs {

/// Deterministic MDP with closed-form dynamics on bounded boxes.
struct MdpSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  core::Vec action_low, action_high;
  core::Vec state_low, state_high;  // nominal box (sampling, diameters)
  std::function<core::Vec(const core::Vec&, const core::Vec&)> transition;
  std::function<double(const core::Vec&, const core::Vec&)> reward;
  std::function<core::Vec(core::Rng&)> init_state;
  double discount = 0.99;  // recorded, unused by the losses

  double state_diameter() const;
};

/// Closed-form reference maps, present for pairs where they exist.
/// Linear forms (x * A row-vector convention) are kept alongside the
/// callables so tests can rebuild them as differentiable expressions.
struct GroundTruth {
  std::function<core::Vec(const core::Vec&)> phi;                      // S1 -> S2
  std::function<core::Vec(const core::Vec&, const core::Vec&)> h1;     // (s1,a1) -> a2
  std::function<core::Vec(const core::Vec&, const core::Vec&)> h2;     // (s2,a2) -> a1
  std::optional<core::Mat> phi_lin;
  std::optional<core::Mat> h1_lin;
  std::optional<core::Mat> h2_lin;
  std::optional<core::Mat> t2_gain;  // m2 dynamics: s' = s + dt * a * t2_gain
};

struct MdpPair {
  std::string name;
  std::map<std::string, double> params;
  MdpSpec m1, m2;
  std::optional<GroundTruth> gt;

  // Abstraction functions into a common space; null for confidence pairs.
  std::function<core::Vec(const core::Vec&)> alpha_state_1, alpha_state_2;
  std::function<core::Vec(const core::Vec&, const core::Vec&)> alpha_action_1, alpha_action_2;
  /// Labels come from per-trajectory confidence instead of a state function.
  bool confidence_abstraction = false;

  // Default paired-abstraction set counts for this pair.
  std::size_t k_state = 1;
  std::size_t k_action = 1;
};

/// Names: scaled | mirror | arm | gain. Unknown names or out-of-range
/// params are rejected.
MdpPair make_pair(const std::string& name, const std::map<std::string, double>& params = {},
                  std::uint64_t seed = 0);

/// One transition. Actions are clamped to the spec's box (clamping is
/// logged); non-finite inputs are rejected.
core::Vec step(const MdpSpec& spec, const core::Vec& s, const core::Vec& a);

/// Stateful policy: quality q blends a proportional controller toward the
/// goal with seeded bounded noise. q=1 is the oracle analog.
struct Policy {
  double quality = 0.0;
  std::function<core::Vec(const core::Vec&)> act;
};

Policy scripted_policy(const MdpPair& pair, int agent, double quality, std::uint64_t seed = 0);

struct Trajectory {
  std::vector<core::Vec> states;   // horizon + 1
  std::vector<core::Vec> actions;  // horizon
  double ret = 0.0;                // undiscounted return
  double quality = 0.0;            // policy-quality index
};

Trajectory rollout(const MdpSpec& spec, const Policy& policy, const core::Vec& s0,
                   std::size_t horizon);

/// End-effector position of a planar arm (first n_links entries of the state
/// are joint angles). Exposed for the arm pair's abstraction and tests.
core::Vec arm_end_effector(const core::Vec& state, std::size_t n_links, double link_len);

}  // namespace wscl::envs
