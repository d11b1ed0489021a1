#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "wscl/config.hpp"
#include "wscl/eval.hpp"

namespace wscl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using config::RunConfig;

namespace {

std::string ypath(const fs::path& dir, char kind, std::size_t k) {
  return (dir / (std::string(kind == 's' ? "ys_" : "ya_") + std::to_string(k) + ".pairs")).string();
}

config::BuiltData load_datasets(const RunConfig& cfg, const envs::MdpPair& pair) {
  const fs::path dir(cfg.out_dir);
  config::BuiltData out;
  const fs::path xi1 = dir / "xi1.traj";
  if (!fs::exists(xi1))
    throw core::InputError("missing '" + xi1.string() + "'; run the gen command first");
  out.xi1 = data::read_trajectories((dir / "xi1.traj").string());
  out.xi2 = data::read_trajectories((dir / "xi2.traj").string());
  for (std::size_t k = 0; k < pair.k_state; ++k)
    out.y_state.push_back(data::read_pairs(ypath(dir, 's', k)));
  for (std::size_t k = 0; k < pair.k_action; ++k)
    out.y_action.push_back(data::read_pairs(ypath(dir, 'a', k)));
  return out;
}

losses::TranslationModel fresh_model(const RunConfig& cfg, const envs::MdpPair& pair) {
  const std::uint64_t model_seed = core::splitmix64(cfg.seed ^ core::fnv1a("model"));
  return losses::TranslationModel::create(pair, cfg.model, model_seed);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("cannot open '" + path.string() + "' for writing");
  os << j.dump(2) << '\n';
}

void write_with_hash(const fs::path& path, const std::string& hash,
                     const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("cannot open '" + path.string() + "' for writing");
  os << "# config=" << hash << '\n';
  body(os);
}

}  // namespace

void cmd_gen(const RunConfig& cfg, bool force) {
  const fs::path dir(cfg.out_dir);
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw core::InputError("output directory '" + cfg.out_dir + "' is not empty (use --force)");
  fs::create_directories(dir);

  const envs::MdpPair pair = config::make_pair_from(cfg);
  const std::string hash = cfg.hash();
  config::BuiltData built = config::build_datasets(pair, cfg.data, cfg.seed);

  data::write_trajectories((dir / "xi1.traj").string(), built.xi1, hash);
  data::write_trajectories((dir / "xi2.traj").string(), built.xi2, hash);
  for (const auto& y : built.y_state) data::write_pairs(ypath(dir, 's', y.index), y, hash);
  for (const auto& y : built.y_action) data::write_pairs(ypath(dir, 'a', y.index), y, hash);

  json manifest;
  manifest["config_hash"] = hash;
  manifest["master_seed"] = cfg.seed;
  manifest["pair_signature"] = config::pair_signature(pair);
  manifest["method"] = cfg.method;
  manifest["trajectories"] = {{"xi1", built.xi1.trajs.size()}, {"xi2", built.xi2.trajs.size()}};
  json files = json::array();
  files.push_back("xi1.traj");
  files.push_back("xi2.traj");
  for (const auto& y : built.y_state) files.push_back("ys_" + std::to_string(y.index) + ".pairs");
  for (const auto& y : built.y_action) files.push_back("ya_" + std::to_string(y.index) + ".pairs");
  manifest["files"] = files;
  write_json(dir / "manifest.json", manifest);
  core::log_info("gen: wrote " + std::to_string(files.size()) + " data files to " + cfg.out_dir);
}

void cmd_train(const RunConfig& cfg, const std::string& phase) {
  if (phase != "1" && phase != "2" && phase != "all")
    throw core::ConfigError("train: phase must be 1, 2, or all");
  if (cfg.method == "oracle")
    throw core::ConfigError("train: the oracle method has nothing to train");
  const fs::path dir(cfg.out_dir);
  const envs::MdpPair pair = config::make_pair_from(cfg);
  const std::string hash = cfg.hash();
  const std::string signature = config::pair_signature(pair);
  config::BuiltData built = load_datasets(cfg, pair);

  losses::TranslationModel model = fresh_model(cfg, pair);
  const std::uint64_t train_seed = core::splitmix64(cfg.seed ^ core::fnv1a("train"));
  json meta;
  meta["config_hash"] = hash;

  if (phase == "1" || phase == "all") {
    train::TrainConfig tc = cfg.effective_train(train_seed);
    tc.log_path = (dir / "train_log_phase1.csv").string();
    train::Phase1Result p1 =
        train::train_phase1(model, built.xi2, built.y_state, built.y_action, tc);
    nn::save_checkpoint(model.phase1_nets(), (dir / "phase1.ckpt").string(),
                        {"phase1", hash, signature});
    meta["phase1"] = {{"status", p1.status},
                      {"forward_holdout_mse", p1.forward_holdout_mse},
                      {"sim_holdout_bce", p1.sim_holdout_bce},
                      {"sim_holdout_accuracy", p1.sim_holdout_accuracy}};
    core::log_info("train: phase 1 " + p1.status);
  }

  if (phase == "2" || phase == "all") {
    const fs::path p1_path = dir / "phase1.ckpt";
    if (!fs::exists(p1_path))
      throw core::InputError("train: phase 2 requires a phase-1 checkpoint at '" +
                             p1_path.string() + "'");
    nn::LoadedCheckpoint ckpt = nn::load_checkpoint(p1_path.string());
    if (ckpt.meta.pair_signature != signature)
      throw core::InputError("train: phase-1 checkpoint pair signature mismatch");
    model.adopt(ckpt);

    train::TrainConfig tc = cfg.effective_train(train_seed);
    tc.log_path = (dir / "train_log_phase2.csv").string();
    tc.checkpoint_path = (dir / "phase2.ckpt").string();
    train::Phase2Result p2 = train::train_phase2(model, built.xi1, built.xi2, tc);
    meta["phase2"] = {{"status", p2.status}, {"cycles", p2.cycles}};
    write_json(dir / "train_meta.json", meta);
    if (p2.status == "aborted")
      throw core::NumericalError("train: phase 2 aborted on a non-finite loss");
    nn::save_checkpoint(model.all_nets(), (dir / "phase2.ckpt").string(),
                        {"phase2", hash, signature});
    core::log_info("train: phase 2 " + p2.status + " after " + std::to_string(p2.cycles) +
                   " cycles");
  } else {
    write_json(dir / "train_meta.json", meta);
  }
}

void cmd_eval(const RunConfig& cfg, const std::vector<std::string>& metrics) {
  static const std::set<std::string> valid{"return", "compounding", "recovery", "misalignment"};
  for (const auto& m : metrics) {
    if (!valid.count(m)) {
      std::string names;
      for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
      throw core::ConfigError("eval: unknown metric '" + m + "' (valid: " + names + ")");
    }
  }
  if (metrics.empty()) throw core::ConfigError("eval: empty metric list");

  const fs::path dir(cfg.out_dir);
  const envs::MdpPair pair = config::make_pair_from(cfg);
  const std::string hash = cfg.hash();
  const bool oracle = cfg.method == "oracle";

  losses::TranslationModel model = fresh_model(cfg, pair);
  eval::MapsView view;
  if (oracle) {
    view = eval::oracle_view(pair);
  } else {
    const fs::path ckpt_path = dir / "phase2.ckpt";
    if (!fs::exists(ckpt_path))
      throw core::InputError("eval: missing checkpoint '" + ckpt_path.string() + "'");
    nn::LoadedCheckpoint ckpt = nn::load_checkpoint(ckpt_path.string());
    if (ckpt.meta.pair_signature != config::pair_signature(pair))
      throw core::InputError("eval: checkpoint pair signature '" + ckpt.meta.pair_signature +
                             "' does not match the configured pair");
    model.adopt(ckpt);
    view = eval::model_view(model);
  }

  std::vector<std::uint64_t> eval_seeds;
  for (std::size_t i = 0; i < cfg.eval.eval_seeds; ++i)
    eval_seeds.push_back(core::splitmix64(cfg.seed ^ (0x9000 + i)));

  for (const auto& metric : metrics) {
    eval::EvalReport report;
    report.pair = cfg.pair_name;
    report.method = cfg.method;
    const fs::path out_path = dir / ("eval_" + metric + ".csv");
    try {
      if (metric == "return") {
        report.metrics.push_back(eval::translated_policy_return(
            pair, view, cfg.eval.episodes, cfg.eval.eval_horizon, eval_seeds));
        report.metrics.push_back(eval::native_policy_return(pair, 1, 1.0, cfg.eval.episodes,
                                                            cfg.eval.eval_horizon, eval_seeds));
        report.metrics.back().name = "native_oracle_return";
        report.metrics.push_back(eval::native_policy_return(pair, 1, 0.0, cfg.eval.episodes,
                                                            cfg.eval.eval_horizon, eval_seeds));
        report.metrics.back().name = "native_random_return";
      } else if (metric == "compounding") {
        config::BuiltData built = load_datasets(cfg, pair);
        core::Rng rng = core::Rng(cfg.seed).split("eval/compounding");
        data::SegmentBatch segments = data::sample_segments(
            built.xi1, cfg.eval.compounding_tmax, cfg.eval.compounding_segments, rng);
        const std::vector<double> curve = eval::compounding_error_curve(pair, view, segments);
        write_with_hash(out_path, hash, [&](std::ostream& os) {
          os << "tau,distance\n";
          for (std::size_t i = 0; i < curve.size(); ++i)
            os << (i + 1) << ',' << core::fmt_g17(curve[i]) << '\n';
        });
        continue;
      } else if (metric == "recovery") {
        eval::RecoveryError rec =
            eval::map_recovery_error(pair, view, cfg.eval.recovery_samples, cfg.seed);
        report.metrics.push_back({"state_map_error", rec.state_err, 0.0, 1, {}});
        report.metrics.push_back({"action_map_error", rec.action_err, 0.0, 1, {}});
        report.metrics.push_back({"state_map_error_norm", rec.state_err_norm, 0.0, 1, {}});
        report.metrics.push_back({"action_map_error_norm", rec.action_err_norm, 0.0, 1, {}});
      } else if (metric == "misalignment") {
        const auto states =
            eval::sample_eval_states(pair.m1, cfg.eval.misalign_states, cfg.seed);
        report.metrics.push_back(
            {"misalignment_score", eval::misalignment_score(pair, view.phi, states), 0.0, 1, {}});
      }
    } catch (const std::exception& e) {
      // Partial-failure contract: record the error for this metric, keep going.
      core::log_error("eval: metric '" + metric + "' failed: " + e.what());
      report.metrics.push_back(
          {metric + "_error", std::nan(""), std::nan(""), 0, {}});
    }
    write_with_hash(out_path, hash, [&](std::ostream& os) {
      os << "pair,method,metric,mean,sd,seeds\n";
      for (const auto& m : report.metrics)
        os << report.pair << ',' << report.method << ',' << m.name << ',' << core::fmt_g17(m.mean)
           << ',' << core::fmt_g17(m.sd) << ',' << m.seeds << '\n';
    });
  }
}

void cmd_sweep(const RunConfig& cfg, const std::string& axis_arg) {
  const std::string axis = axis_arg.empty() ? cfg.sweep.axis : axis_arg;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const envs::MdpPair pair = config::make_pair_from(cfg);
  const std::string hash = cfg.hash();

  std::vector<std::uint64_t> seeds = cfg.sweep.seeds;
  if (seeds.empty()) throw core::ConfigError("sweep: seed list is empty");

  std::vector<std::uint64_t> eval_seeds;
  for (std::size_t i = 0; i < cfg.eval.eval_seeds; ++i)
    eval_seeds.push_back(core::splitmix64(cfg.seed ^ (0x9000 + i)));

  config::BuiltData built = config::build_datasets(pair, cfg.data, cfg.seed);

  struct Row {
    std::string cell;
    std::uint64_t seed;
    double value;
    std::string status;
  };
  std::vector<Row> raw;

  // Phase-1 outputs do not depend on the method or horizon; train them once
  // per seed and share across cells.
  std::map<std::uint64_t, losses::TranslationModel> phase1_cache;
  auto phase1_for = [&](std::uint64_t seed) -> losses::TranslationModel& {
    auto it = phase1_cache.find(seed);
    if (it != phase1_cache.end()) return it->second;
    losses::TranslationModel model = losses::TranslationModel::create(pair, cfg.model, seed);
    train::TrainConfig tc = cfg.effective_train(seed);
    train::train_phase1(model, built.xi2, built.y_state, built.y_action, tc);
    return phase1_cache.emplace(seed, std::move(model)).first->second;
  };

  auto run_cell = [&](const std::string& cell, const std::string& method, std::uint64_t seed) {
    if (method == "oracle") {
      eval::Metric ret = eval::native_policy_return(pair, 1, 1.0, cfg.eval.episodes,
                                                    cfg.eval.eval_horizon, {seed});
      raw.push_back({cell, seed, ret.mean, "native"});
      return;
    }
    RunConfig cell_cfg = cfg;
    cell_cfg.method = method;
    losses::TranslationModel model = losses::TranslationModel::create(pair, cfg.model, seed);
    const losses::TranslationModel& p1 = phase1_for(seed);
    model.t2hat = p1.t2hat;
    model.sim_state = p1.sim_state;
    model.sim_action = p1.sim_action;
    train::TrainConfig tc = cell_cfg.effective_train(seed);
    try {
      train::Phase2Result res = train::train_phase2(model, built.xi1, built.xi2, tc);
      if (res.status == "aborted") {
        raw.push_back({cell, seed, std::nan(""), "aborted"});
        return;
      }
      eval::Metric ret = eval::translated_policy_return(
          pair, eval::model_view(model), cfg.eval.episodes, cfg.eval.eval_horizon, eval_seeds);
      raw.push_back({cell, seed, ret.mean, res.status});
    } catch (const std::exception& e) {
      raw.push_back({cell, seed, std::nan(""), std::string("failed: ") + e.what()});
    }
  };

  std::vector<std::string> cells;
  if (axis == "method") {
    if (cfg.sweep.methods.empty()) throw core::ConfigError("sweep: method list is empty");
    for (const auto& m : cfg.sweep.methods) {
      cells.push_back(m);
      for (std::uint64_t s : seeds) run_cell(m, m, s);
    }
  } else if (axis == "horizon") {
    if (cfg.sweep.horizons.empty()) throw core::ConfigError("sweep: horizon list is empty");
    for (std::size_t T : cfg.sweep.horizons) {
      const std::string cell = "T" + std::to_string(T);
      cells.push_back(cell);
      for (std::uint64_t s : seeds) run_cell(cell, "weascl-" + std::to_string(T), s);
    }
  } else if (axis == "seed") {
    for (std::uint64_t s : seeds) {
      const std::string cell = "seed" + std::to_string(s);
      cells.push_back(cell);
      run_cell(cell, cfg.method, s);
    }
  } else {
    throw core::ConfigError("sweep: unknown axis '" + axis + "' (method | horizon | seed)");
  }

  write_with_hash(dir / ("sweep_" + axis + "_raw.csv"), hash, [&](std::ostream& os) {
    os << "cell,seed,return,status\n";
    for (const auto& r : raw)
      os << r.cell << ',' << r.seed << ',' << core::fmt_g17(r.value) << ',' << r.status << '\n';
  });

  write_with_hash(dir / ("sweep_" + axis + ".csv"), hash, [&](std::ostream& os) {
    os << "cell,metric,mean,sd,seeds,failures\n";
    for (const auto& cell : cells) {
      std::vector<double> values;
      std::size_t failures = 0;
      for (const auto& r : raw) {
        if (r.cell != cell) continue;
        if (std::isfinite(r.value))
          values.push_back(r.value);
        else
          ++failures;
      }
      eval::Metric m = eval::aggregate("return", values);
      os << cell << ",return," << core::fmt_g17(m.mean) << ',' << core::fmt_g17(m.sd) << ','
         << m.seeds << ',' << failures << '\n';
    }
  });
}

}  // namespace wscl::cli
