#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wscl/core.hpp"
#include "wscl/datasets.hpp"
#include "wscl/envs.hpp"
#include "wscl/eval.hpp"
#include "wscl/losses.hpp"
#include "wscl/train.hpp"

namespace wscl::config {

struct DataConfig {
  std::size_t rungs = 7;
  std::size_t trajs_per_rung = 10;
  std::size_t horizon = 50;
  std::size_t n_pairs = 1000;
  double sigma_frac = 0.10;
  bool binary = false;
  double threshold_frac = 0.05;
};

struct EvalConfig {
  std::size_t episodes = 20;
  std::size_t eval_horizon = 50;
  std::size_t eval_seeds = 5;
  std::size_t recovery_samples = 1000;
  std::size_t misalign_states = 500;
  std::size_t compounding_segments = 128;
  std::size_t compounding_tmax = 10;
};

struct SweepConfig {
  std::string axis = "method";
  std::vector<std::string> methods;
  std::vector<std::size_t> horizons;
  std::vector<std::uint64_t> seeds;
};

/// Parsed run configuration. Unknown keys are rejected at parse time.
struct RunConfig {
  std::string pair_name = "scaled";
  std::map<std::string, double> pair_params;
  DataConfig data;
  losses::ModelDims model;
  losses::LossWeights weights;  // base; the method tag overrides on top
  train::TrainConfig train_cfg;
  EvalConfig eval;
  SweepConfig sweep;
  std::string method = "weascl-5";
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  /// Hash of the canonical serialization (out_dir excluded: it never affects
  /// results).
  std::string hash() const;
  void validate() const;
  /// Weights after applying the method tag: cc removes dynamics consistency,
  /// dcc-T removes the weak constraints, weascl-T keeps everything.
  losses::LossWeights effective_weights() const;
  /// Training config with effective weights and derived seed applied.
  train::TrainConfig effective_train(std::uint64_t train_seed) const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");
RunConfig parse_config_file(const std::string& path);

std::string pair_signature(const envs::MdpPair& pair);
envs::MdpPair make_pair_from(const RunConfig& cfg);

struct BuiltData {
  data::TrajectorySet xi1, xi2;
  std::vector<data::AbstractionPairSet> y_state, y_action;
};

/// Deterministic dataset generation from the config's master seed.
BuiltData build_datasets(const envs::MdpPair& pair, const DataConfig& data, std::uint64_t seed);

}  // namespace wscl::config

namespace wscl::cli {

// Subcommand implementations. Errors are reported by exception type and
// mapped to exit codes by the binary: ConfigError 2, InputError 3,
// NumericalError 4.
void cmd_gen(const config::RunConfig& cfg, bool force);
void cmd_train(const config::RunConfig& cfg, const std::string& phase);
void cmd_eval(const config::RunConfig& cfg, const std::vector<std::string>& metrics);
void cmd_sweep(const config::RunConfig& cfg, const std::string& axis);

}  // namespace wscl::cli
