#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wscl/core.hpp"
#include "wscl/datasets.hpp"
#include "wscl/envs.hpp"
#include "wscl/losses.hpp"
#include "wscl/nn.hpp"

namespace wscl::train {

struct TrainConfig {
  // Phase 1 (similarity functions, then forward model)
  std::size_t p1_max_epochs = 200;  // hard cap per network
  std::size_t p1_batch = 64;
  double p1_tol = 1e-4;
  std::size_t p1_patience = 20;
  double lr_sim = 1e-3;
  double lr_forward = 1e-3;

  // Phase 2 (alternating map training)
  std::size_t p2_max_cycles = 300;  // hard cap on outer cycles
  std::size_t n_state = 25;         // N^s inner iterations
  std::size_t n_action = 25;        // N^a inner iterations
  std::size_t batch = 64;
  double lr_maps = 1e-3;
  double lr_disc = 5e-4;
  double beta1_disc = 0.5;
  double p2_tol = 1e-4;
  std::size_t p2_patience = 20;

  losses::LossWeights weights;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // cycles between checkpoints; 0 = end only
  std::string checkpoint_path;       // used when checkpoint_every > 0
  std::string log_path;              // CSV written here when non-empty

  /// Diagnostic hook invoked after every phase-2 inner iteration.
  std::function<void(losses::Phase phase, std::size_t cycle, std::size_t iter)> observer;

  void validate() const;
};

struct LogRecord {
  std::string phase;
  std::size_t step = 0;
  double adv_s = 0.0, adv_a = 0.0, dom = 0.0, mdyn = 0.0, weak = 0.0, total = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<LogRecord> records;
  std::string status;
  void write_csv(const std::string& path) const;
};

/// Loop guard: the moving-average loss has improved on its best by less than
/// `tol` (relative) for `patience` consecutive checks.
class ConvergenceTracker {
 public:
  ConvergenceTracker(double tol, std::size_t patience, std::size_t window = 5);
  /// Feed one check value; returns true once converged.
  bool update(double loss);
  bool converged() const { return streak_ >= patience_; }

 private:
  double tol_;
  std::size_t patience_;
  std::size_t window_;
  std::vector<double> recent_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t streak_ = 0;
};

/// Pure-function form over a window of recorded check losses.
/// Requires window length >= patience.
bool convergence_check(const core::Vec& losses, double tol = 1e-4, std::size_t patience = 20);

struct Phase1Result {
  std::string status;  // "converged" | "max-epochs"
  TrainLog log;
  double forward_holdout_mse = 0.0;
  std::vector<double> sim_holdout_bce;       // state sets first, then action sets
  std::vector<double> sim_holdout_accuracy;  // thresholded at 0.5
};

/// Algorithm: each similarity net is trained to convergence on its pair set,
/// then the forward model on (s,a,s') triples; outputs are frozen afterwards.
Phase1Result train_phase1(losses::TranslationModel& model, const data::TrajectorySet& xi2,
                          const std::vector<data::AbstractionPairSet>& y_state,
                          const std::vector<data::AbstractionPairSet>& y_action,
                          const TrainConfig& cfg);

struct Phase2Result {
  std::string status;  // "converged" | "cycle-cap" | "aborted"
  TrainLog log;
  std::size_t cycles = 0;
};

/// Alternating map training: N^s state-phase iterations (state map + its
/// discriminator), then N^a action-phase iterations (action maps + theirs),
/// until convergence or the cycle cap.
Phase2Result train_phase2(losses::TranslationModel& model, const data::TrajectorySet& xi1,
                          const data::TrajectorySet& xi2, const TrainConfig& cfg);

}  // namespace wscl::train
