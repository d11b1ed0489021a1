#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wscl/core.hpp"
#include "wscl/envs.hpp"

namespace wscl::data {

/// Demonstration set for one agent.
struct TrajectorySet {
  int agent = 1;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<envs::Trajectory> trajs;
  core::Vec confidence;  // per-trajectory, empty until confidence_labels

  bool has_confidence() const { return !confidence.empty(); }
  std::size_t total_steps() const;
};

/// |result| = |ladder| * per_rung trajectories, deterministic under seed.
TrajectorySet collect_demos(const envs::MdpPair& pair, int agent, const core::Vec& ladder,
                            std::size_t per_rung, std::size_t horizon, std::uint64_t seed);

/// Min-max normalization of per-trajectory returns into [0,1]; rejects a
/// degenerate set (all returns equal).
TrajectorySet confidence_labels(TrajectorySet set);

struct PairRecord {
  core::Vec x1;  // s1 or (s1,a1)
  core::Vec x2;  // s2 or (s2,a2)
  double label = 0.0;
};

/// Loosely paired data with similarity labels over an abstraction.
struct AbstractionPairSet {
  char kind = 's';  // 's' (states) or 'a' (state-action)
  std::size_t index = 0;
  std::string abstraction;
  double sigma = 0.0;       // soft-label bandwidth (absolute)
  bool binary = false;
  double threshold = 0.0;   // binary-label distance cut (absolute)
  bool with_replacement = false;
  std::size_t dim_s1 = 0, dim_a1 = 0, dim_s2 = 0, dim_a2 = 0;
  std::vector<PairRecord> records;
};

struct PairGenOptions {
  std::size_t n = 1000;
  double sigma_frac = 0.10;      // fraction of abstraction-space diameter
  bool binary = false;
  double threshold_frac = 0.05;  // fraction of abstraction-space diameter
  std::uint64_t seed = 0;
};

/// Samples n records across set1 x set2 items, biased 50/50 between near
/// pairs (abstraction distance < sigma) and uniform pairs. Soft labels
/// exp(-d^2 / 2 sigma^2); binary labels [d <= threshold]. Confidence pairs
/// use per-trajectory confidence as the (1-D) abstraction value.
AbstractionPairSet make_abstraction_pairs(const envs::MdpPair& pair, const TrajectorySet& set1,
                                          const TrajectorySet& set2, char kind, std::size_t k,
                                          const PairGenOptions& opt);

/// Segment batch: states[0..T] and actions[0..T-1], each one row per sample.
struct SegmentBatch {
  std::vector<core::Mat> states;
  std::vector<core::Mat> actions;
  std::size_t horizon() const { return actions.size(); }
  std::size_t batch() const { return states.empty() ? 0 : states[0].rows; }
};

/// Uniformly random (trajectory, offset) segments of length T. Rejects T+1
/// exceeding the shortest trajectory.
SegmentBatch sample_segments(const TrajectorySet& set, std::size_t T, std::size_t batch,
                             core::Rng& rng);

// Per-loss batch samplers (uniform over all steps).
core::Mat sample_states(const TrajectorySet& set, std::size_t batch, core::Rng& rng);
struct StateActionBatch {
  core::Mat s, a;
};
StateActionBatch sample_state_actions(const TrajectorySet& set, std::size_t batch, core::Rng& rng);

struct PairBatch {
  core::Mat x1, x2;
  core::Vec labels;
};
PairBatch sample_pair_batch(const AbstractionPairSet& set, std::size_t batch, core::Rng& rng);
PairBatch pair_batch_slice(const AbstractionPairSet& set, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// File formats (17-significant-digit floats, newline-terminated lines).
// ---------------------------------------------------------------------------

void write_trajectories(const std::string& path, const TrajectorySet& set,
                        const std::string& config_hash = "");
TrajectorySet read_trajectories(const std::string& path);

void write_pairs(const std::string& path, const AbstractionPairSet& set,
                 const std::string& config_hash = "");
AbstractionPairSet read_pairs(const std::string& path);

}  // namespace wscl::data
