// Command-line front end: data generation, two-phase training, evaluation,
// and experiment sweeps, driven by a config file.
//
//   wscl gen    --config cfg.ini [--out DIR] [--force]
//   wscl train  --config cfg.ini [--out DIR] [--phase 1|2|all] [--method TAG]
//   wscl eval   --config cfg.ini [--out DIR] [--method TAG] [--metrics a,b]
//   wscl sweep  --config cfg.ini [--out DIR] [--axis method|horizon|seed]
//
// Exit codes: 0 success, 2 config error, 3 input error, 4 numerical abort.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wscl/config.hpp"

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised correspondence learning on toy MDP pairs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, phase = "all", method, metrics = "return", axis;
  bool force = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file path")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides [run] out)");
    cmd->add_option("--method", method, "method tag (overrides [run] method)");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate demonstration and pair data");
  add_common(gen);
  gen->add_flag("--force", force, "overwrite a non-empty output directory");

  CLI::App* train = app.add_subcommand("train", "run training phases");
  add_common(train);
  train->add_option("--phase", phase, "1 | 2 | all")->check(CLI::IsMember({"1", "2", "all"}));

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  add_common(eval_cmd);
  eval_cmd->add_option("--metrics", metrics, "comma list: return,compounding,recovery,misalignment");

  CLI::App* sweep = app.add_subcommand("sweep", "run an experiment sweep");
  add_common(sweep);
  sweep->add_option("--axis", axis, "method | horizon | seed");

  CLI11_PARSE(app, argc, argv);

  try {
    wscl::config::RunConfig cfg = wscl::config::parse_config_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!method.empty()) {
      cfg.method = method;
      cfg.validate();
    }
    if (gen->parsed()) wscl::cli::cmd_gen(cfg, force);
    if (train->parsed()) wscl::cli::cmd_train(cfg, phase);
    if (eval_cmd->parsed()) wscl::cli::cmd_eval(cfg, split_list(metrics));
    if (sweep->parsed()) wscl::cli::cmd_sweep(cfg, axis);
  } catch (const wscl::core::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const wscl::core::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const wscl::core::NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
