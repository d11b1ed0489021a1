#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wscl/core.hpp"
#include "wscl/datasets.hpp"
#include "wscl/envs.hpp"
#include "wscl/losses.hpp"
#include "wscl/train.hpp"

namespace wscl::eval {

/// Inference-only view of the translation maps. Built from a trained model
/// or from closed-form references; the metrics below never touch training
/// state.
struct MapsView {
  std::function<core::Vec(const core::Vec&)> phi;
  std::function<core::Vec(const core::Vec&, const core::Vec&)> h1;
  std::function<core::Vec(const core::Vec&, const core::Vec&)> h2;
};

MapsView model_view(const losses::TranslationModel& model);
/// Ground-truth maps; rejected for pairs without closed forms.
MapsView oracle_view(const envs::MdpPair& pair);

struct Metric {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t seeds = 0;
  std::vector<double> per_seed;
};

Metric aggregate(const std::string& name, const std::vector<double>& values);

/// Runs the m2 oracle through the maps in m1: a1 = H2(Phi(s1), pi*(Phi(s1))).
/// One value per seed (mean episode return); sd over seeds. A single seed is
/// reported with sd 0 and a warning flag in the log.
Metric translated_policy_return(const envs::MdpPair& pair, const MapsView& maps,
                                std::size_t episodes, std::size_t horizon,
                                const std::vector<std::uint64_t>& seeds);

/// Native scripted policy of the given quality run in its own environment.
Metric native_policy_return(const envs::MdpPair& pair, int agent, double quality,
                            std::size_t episodes, std::size_t horizon,
                            const std::vector<std::uint64_t>& seeds);

/// d_tau = mean || Phi(s1_tau) - s2hat_tau ||_2 for tau = 1..T, where s2hat
/// is rolled with the TRUE m2 dynamics from Phi(s1_0) feeding translated
/// actions. Isolates map error from model error.
std::vector<double> compounding_error_curve(const envs::MdpPair& pair, const MapsView& maps,
                                            const data::SegmentBatch& segments);

/// Fraction of states mapped closer to the ground-truth branch than to the
/// mirrored branch; ties within 1e-12 count as incorrect.
double misalignment_score(const envs::MdpPair& pair,
                          const std::function<core::Vec(const core::Vec&)>& phi,
                          const std::vector<core::Vec>& eval_states);

struct RecoveryError {
  double state_err = 0.0;
  double action_err = 0.0;
  double state_err_norm = 0.0;   // divided by the m2 state-space diameter
  double action_err_norm = 0.0;  // divided by the m2 action-box diameter
};

RecoveryError map_recovery_error(const envs::MdpPair& pair, const MapsView& maps, std::size_t n,
                                 std::uint64_t seed);

/// Uniform states over the m1 box, for misalignment/recovery sampling.
std::vector<core::Vec> sample_eval_states(const envs::MdpSpec& spec, std::size_t n,
                                          std::uint64_t seed);

struct EvalReport {
  std::string pair;
  std::string method;
  std::vector<Metric> metrics;
  std::vector<std::pair<std::string, std::vector<double>>> curves;
};

void write_report_csv(const std::string& path, const EvalReport& report);
void write_curve_csv(const std::string& path, const std::vector<double>& curve);

// ---------------------------------------------------------------------------
// Horizon sweep: trains phase 2 per T (phase-1 outputs are shared; they do
// not depend on T) and reports the translated-policy return per cell.
// ---------------------------------------------------------------------------

struct HorizonCell {
  std::size_t T = 0;
  Metric ret;
  std::vector<std::string> statuses;  // per training seed
};

struct HorizonSweepSetup {
  const losses::TranslationModel* phase1_model = nullptr;  // frozen phase-1 outputs
  losses::ModelDims dims;
  train::TrainConfig train_cfg;       // horizon is overridden per cell
  std::size_t episodes = 20;
  std::size_t eval_horizon = 50;
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> eval_seeds;
};

std::vector<HorizonCell> horizon_sweep(const envs::MdpPair& pair, const data::TrajectorySet& xi1,
                                       const data::TrajectorySet& xi2,
                                       const std::vector<std::size_t>& horizons,
                                       const HorizonSweepSetup& setup);

}  // namespace wscl::eval
