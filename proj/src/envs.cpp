#include "wscl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace wscl::envs {

namespace {

constexpr double kDt = 0.1;
constexpr double kGoalGain = 1.0;     // proportional-controller gain
constexpr double kNoiseMag = 0.5;     // fixed noise magnitude (bounded, seeded)

double norm2(const core::Vec& a, const core::Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

core::Vec clamp_action(const MdpSpec& spec, const core::Vec& a) {
  core::Vec out = a;
  bool clamped = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < spec.action_low[i]) {
      out[i] = spec.action_low[i];
      clamped = true;
    } else if (out[i] > spec.action_high[i]) {
      out[i] = spec.action_high[i];
      clamped = true;
    }
  }
  if (clamped) core::log_debug("step: action clamped to bounds in " + spec.name);
  return out;
}

core::Mat diag2(double a, double b) {
  core::Mat m(2, 2);
  m.at(0, 0) = a;
  m.at(1, 1) = b;
  return m;
}

/// Point-mass integrator: s' = s + dt * gain .* a  (per-axis gain).
MdpSpec integrator_spec(const std::string& name, core::Vec gain, core::Vec init_half_extent,
                        double action_bound) {
  MdpSpec spec;
  spec.name = name;
  spec.state_dim = gain.size();
  spec.action_dim = gain.size();
  spec.action_low.assign(spec.action_dim, -action_bound);
  spec.action_high.assign(spec.action_dim, action_bound);
  spec.state_low.resize(spec.state_dim);
  spec.state_high.resize(spec.state_dim);
  for (std::size_t i = 0; i < spec.state_dim; ++i) {
    spec.state_low[i] = -init_half_extent[i];
    spec.state_high[i] = init_half_extent[i];
  }
  spec.transition = [gain](const core::Vec& s, const core::Vec& a) {
    core::Vec out = s;
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += kDt * gain[i] * a[i];
    return out;
  };
  // Goal fixed at the origin for the integrator pairs.
  spec.reward = [](const core::Vec& s, const core::Vec&) {
    double d = 0.0;
    for (double x : s) d += x * x;
    return -std::sqrt(d);
  };
  spec.init_state = [extent = init_half_extent](core::Rng& rng) {
    core::Vec s(extent.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(-extent[i], extent[i]);
    return s;
  };
  return spec;
}

core::Vec linear_apply(const core::Mat& m, const core::Vec& x) {
  core::Vec out(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += x[i] * m.at(i, j);
  return out;
}

MdpSpec arm_spec(const std::string& name, std::size_t n_links, double link_len) {
  MdpSpec spec;
  spec.name = name;
  spec.state_dim = n_links + 2;  // joint angles + goal xy
  spec.action_dim = n_links;
  spec.action_low.assign(n_links, -1.0);
  spec.action_high.assign(n_links, 1.0);
  spec.state_low.assign(spec.state_dim, -4.0);
  spec.state_high.assign(spec.state_dim, 4.0);
  const double reach = static_cast<double>(n_links) * link_len;
  for (std::size_t i = n_links; i < spec.state_dim; ++i) {
    spec.state_low[i] = -reach;
    spec.state_high[i] = reach;
  }
  spec.transition = [n_links](const core::Vec& s, const core::Vec& a) {
    core::Vec out = s;
    for (std::size_t i = 0; i < n_links; ++i) out[i] += kDt * a[i];
    return out;  // goal entries stay fixed
  };
  spec.reward = [n_links, link_len](const core::Vec& s, const core::Vec&) {
    core::Vec ee = arm_end_effector(s, n_links, link_len);
    core::Vec goal{s[n_links], s[n_links + 1]};
    return -norm2(ee, goal);
  };
  spec.init_state = [n_links, reach](core::Rng& rng) {
    core::Vec s(n_links + 2);
    for (std::size_t i = 0; i < n_links; ++i) s[i] = rng.uniform(-1.5707963267948966, 1.5707963267948966);
    const double radius = rng.uniform(0.3 * reach, 0.9 * reach);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    s[n_links] = radius * std::cos(angle);
    s[n_links + 1] = radius * std::sin(angle);
    return s;
  };
  return spec;
}

/// Jacobian-transpose controller toward the goal for a planar arm.
core::Vec arm_control(const core::Vec& s, std::size_t n_links, double link_len) {
  core::Vec ee = arm_end_effector(s, n_links, link_len);
  const double ex = s[n_links] - ee[0];
  const double ey = s[n_links + 1] - ee[1];
  core::Vec u(n_links, 0.0);
  // J[0][j] = -sum_{i>=j} l*sin(cum_i); J[1][j] = sum_{i>=j} l*cos(cum_i)
  double cum = 0.0;
  std::vector<double> cums(n_links);
  for (std::size_t i = 0; i < n_links; ++i) {
    cum += s[i];
    cums[i] = cum;
  }
  for (std::size_t j = 0; j < n_links; ++j) {
    double jx = 0.0, jy = 0.0;
    for (std::size_t i = j; i < n_links; ++i) {
      jx -= link_len * std::sin(cums[i]);
      jy += link_len * std::cos(cums[i]);
    }
    u[j] = 2.0 * kGoalGain * (jx * ex + jy * ey);
  }
  return u;
}

}  // namespace

double MdpSpec::state_diameter() const {
  double s = 0.0;
  for (std::size_t i = 0; i < state_dim; ++i)
    s += (state_high[i] - state_low[i]) * (state_high[i] - state_low[i]);
  return std::sqrt(s);
}

core::Vec arm_end_effector(const core::Vec& state, std::size_t n_links, double link_len) {
  double x = 0.0, y = 0.0, cum = 0.0;
  for (std::size_t i = 0; i < n_links; ++i) {
    cum += state[i];
    x += link_len * std::cos(cum);
    y += link_len * std::sin(cum);
  }
  return {x, y};
}

MdpPair make_pair(const std::string& name, const std::map<std::string, double>& params,
                  std::uint64_t seed) {
  (void)seed;  // pair construction is deterministic; seeds enter at sampling time
  for (const auto& [key, _] : params) {
    if (name == "gain" && key == "g") continue;
    throw core::ConfigError("make_pair: unknown parameter '" + key + "' for pair '" + name + "'");
  }

  MdpPair pair;
  pair.name = name;
  pair.params = params;

  if (name == "scaled") {
    // m2 positions are m1 positions expressed through C = diag(2, 0.5);
    // m2 actuates through G = diag(4, 1).
    const core::Mat C = diag2(2.0, 0.5);
    const core::Mat G = diag2(4.0, 1.0);
    pair.m1 = integrator_spec("scaled-m1", {1.0, 1.0}, {1.0, 1.0}, 8.0);
    pair.m2 = integrator_spec("scaled-m2", {4.0, 1.0}, {2.0, 0.5}, 8.0);
    GroundTruth gt;
    gt.phi_lin = C;
    gt.h1_lin = diag2(0.5, 0.5);   // G^-1 C
    gt.h2_lin = diag2(2.0, 2.0);   // C^-1 G
    gt.t2_gain = G;
    gt.phi = [C](const core::Vec& s) { return linear_apply(C, s); };
    gt.h1 = [m = *gt.h1_lin](const core::Vec&, const core::Vec& a) { return linear_apply(m, a); };
    gt.h2 = [m = *gt.h2_lin](const core::Vec&, const core::Vec& a) { return linear_apply(m, a); };
    pair.gt = std::move(gt);
    // Common abstraction space: physical position in m2 coordinates.
    pair.alpha_state_1 = [C](const core::Vec& s) { return linear_apply(C, s); };
    pair.alpha_state_2 = [](const core::Vec& t) { return t; };
    pair.alpha_action_1 = [C](const core::Vec&, const core::Vec& a) { return linear_apply(C, a); };
    pair.alpha_action_2 = [G](const core::Vec&, const core::Vec& b) { return linear_apply(G, b); };
  } else if (name == "mirror") {
    // Identical integrators; every unsupervised loss is blind to s -> -s.
    pair.m1 = integrator_spec("mirror-m1", {1.0, 1.0}, {1.0, 1.0}, 8.0);
    pair.m2 = integrator_spec("mirror-m2", {1.0, 1.0}, {1.0, 1.0}, 8.0);
    GroundTruth gt;
    gt.phi_lin = diag2(1.0, 1.0);
    gt.h1_lin = diag2(1.0, 1.0);
    gt.h2_lin = diag2(1.0, 1.0);
    gt.t2_gain = diag2(1.0, 1.0);
    gt.phi = [](const core::Vec& s) { return s; };
    gt.h1 = [](const core::Vec&, const core::Vec& a) { return a; };
    gt.h2 = [](const core::Vec&, const core::Vec& a) { return a; };
    pair.gt = std::move(gt);
    pair.alpha_state_1 = [](const core::Vec& s) { return s; };
    pair.alpha_state_2 = [](const core::Vec& s) { return s; };
    pair.alpha_action_1 = [](const core::Vec&, const core::Vec& a) { return a; };
    pair.alpha_action_2 = [](const core::Vec&, const core::Vec& a) { return a; };
  } else if (name == "gain") {
    double g = 4.0;
    if (auto it = params.find("g"); it != params.end()) g = it->second;
    if (!(g > 0.0)) throw core::ConfigError("make_pair: gain parameter g must be positive");
    pair.params["g"] = g;
    pair.m1 = integrator_spec("gain-m1", {g, g}, {1.0, 1.0}, 8.0);
    pair.m2 = integrator_spec("gain-m2", {1.0, 1.0}, {1.0, 1.0}, 8.0);
    GroundTruth gt;
    gt.phi_lin = diag2(1.0, 1.0);
    gt.h1_lin = diag2(g, g);
    gt.h2_lin = diag2(1.0 / g, 1.0 / g);
    gt.t2_gain = diag2(1.0, 1.0);
    gt.phi = [](const core::Vec& s) { return s; };
    gt.h1 = [g](const core::Vec&, const core::Vec& a) {
      core::Vec out = a;
      for (auto& x : out) x *= g;
      return out;
    };
    gt.h2 = [g](const core::Vec&, const core::Vec& a) {
      core::Vec out = a;
      for (auto& x : out) x /= g;
      return out;
    };
    pair.gt = std::move(gt);
    // Similarity labels come from per-trajectory confidence, not a state map.
    pair.confidence_abstraction = true;
    pair.k_state = 0;
    pair.k_action = 1;
  } else if (name == "arm") {
    const std::size_t links1 = 3, links2 = 2;
    const double len1 = 0.5, len2 = 0.75;
    pair.m1 = arm_spec("arm-m1", links1, len1);
    pair.m2 = arm_spec("arm-m2", links2, len2);
    pair.alpha_state_1 = [=](const core::Vec& s) { return arm_end_effector(s, links1, len1); };
    pair.alpha_state_2 = [=](const core::Vec& s) { return arm_end_effector(s, links2, len2); };
    // Action abstraction: end-effector displacement produced by the action.
    pair.alpha_action_1 = [=](const core::Vec& s, const core::Vec& a) {
      core::Vec s2 = s;
      for (std::size_t i = 0; i < links1; ++i) s2[i] += kDt * a[i];
      core::Vec e0 = arm_end_effector(s, links1, len1);
      core::Vec e1 = arm_end_effector(s2, links1, len1);
      return core::Vec{e1[0] - e0[0], e1[1] - e0[1]};
    };
    pair.alpha_action_2 = [=](const core::Vec& s, const core::Vec& a) {
      core::Vec s2 = s;
      for (std::size_t i = 0; i < links2; ++i) s2[i] += kDt * a[i];
      core::Vec e0 = arm_end_effector(s, links2, len2);
      core::Vec e1 = arm_end_effector(s2, links2, len2);
      return core::Vec{e1[0] - e0[0], e1[1] - e0[1]};
    };
  } else {
    throw core::ConfigError("make_pair: unknown pair name '" + name + "'");
  }
  return pair;
}

core::Vec step(const MdpSpec& spec, const core::Vec& s, const core::Vec& a) {
  if (s.size() != spec.state_dim || a.size() != spec.action_dim)
    throw core::InputError("step: dimension mismatch in " + spec.name);
  for (double x : s)
    if (!std::isfinite(x)) throw core::NumericalError("step: non-finite state in " + spec.name);
  for (double x : a)
    if (!std::isfinite(x)) throw core::NumericalError("step: non-finite action in " + spec.name);
  return spec.transition(s, clamp_action(spec, a));
}

Policy scripted_policy(const MdpPair& pair, int agent, double quality, std::uint64_t seed) {
  if (agent != 1 && agent != 2) throw core::InputError("scripted_policy: agent must be 1 or 2");
  if (quality < 0.0 || quality > 1.0)
    throw core::InputError("scripted_policy: quality must lie in [0,1]");
  const MdpSpec& spec = agent == 1 ? pair.m1 : pair.m2;

  // Proportional controller toward the goal, gain-compensated per agent.
  std::function<core::Vec(const core::Vec&)> control;
  if (pair.name == "arm") {
    const std::size_t links = spec.action_dim;
    const double len = links == 3 ? 0.5 : 0.75;
    control = [links, len](const core::Vec& s) { return arm_control(s, links, len); };
  } else {
    core::Vec inv_gain(spec.action_dim, 1.0);
    if (pair.name == "scaled" && agent == 2) inv_gain = {0.25, 1.0};
    if (pair.name == "gain" && agent == 1) {
      const double g = pair.params.at("g");
      inv_gain.assign(spec.action_dim, 1.0 / g);
    }
    control = [inv_gain](const core::Vec& s) {
      core::Vec u(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) u[i] = kGoalGain * inv_gain[i] * (0.0 - s[i]);
      return u;
    };
  }

  auto rng = std::make_shared<core::Rng>(
      core::Rng(seed).split("policy/" + pair.name + "/" + std::to_string(agent)).split(
          static_cast<std::uint64_t>(quality * 1e6)));
  const std::size_t adim = spec.action_dim;
  Policy p;
  p.quality = quality;
  p.act = [control, rng, quality, adim](const core::Vec& s) {
    core::Vec u = control(s);
    core::Vec noise = rng->unit_vec(adim);
    core::Vec a(adim);
    for (std::size_t i = 0; i < adim; ++i)
      a[i] = quality * u[i] + (1.0 - quality) * kNoiseMag * noise[i];
    return a;
  };
  return p;
}

Trajectory rollout(const MdpSpec& spec, const Policy& policy, const core::Vec& s0,
                   std::size_t horizon) {
  if (horizon < 1) throw core::InputError("rollout: horizon must be >= 1");
  Trajectory traj;
  traj.quality = policy.quality;
  traj.states.reserve(horizon + 1);
  traj.actions.reserve(horizon);
  traj.states.push_back(s0);
  core::Vec s = s0;
  for (std::size_t t = 0; t < horizon; ++t) {
    core::Vec a = policy.act(s);
    for (double x : a)
      if (!std::isfinite(x))
        throw core::NumericalError("rollout: policy emitted a non-finite action at step " +
                                   std::to_string(t));
    // Record the clamped action so stored triples satisfy the transition
    // exactly.
    a = clamp_action(spec, a);
    traj.ret += spec.reward(s, a);
    s = spec.transition(s, a);
    traj.actions.push_back(std::move(a));
    traj.states.push_back(s);
  }
  return traj;
}

}  // namespace wscl::envs
