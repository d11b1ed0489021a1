#include "wscl/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace wscl::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw core::ConfigError("expected a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& v) {
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (...) {
    throw core::ConfigError("expected a non-negative integer, got '" + v + "'");
  }
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"pair.name", [](RunConfig& c, const std::string& v) { c.pair_name = v; }},
      {"pair.g", [](RunConfig& c, const std::string& v) { c.pair_params["g"] = core::parse_double(v); }},

      {"data.rungs", [](RunConfig& c, const std::string& v) { c.data.rungs = parse_size(v); }},
      {"data.trajs_per_rung",
       [](RunConfig& c, const std::string& v) { c.data.trajs_per_rung = parse_size(v); }},
      {"data.horizon", [](RunConfig& c, const std::string& v) { c.data.horizon = parse_size(v); }},
      {"data.n_pairs", [](RunConfig& c, const std::string& v) { c.data.n_pairs = parse_size(v); }},
      {"data.sigma_frac",
       [](RunConfig& c, const std::string& v) { c.data.sigma_frac = core::parse_double(v); }},
      {"data.binary", [](RunConfig& c, const std::string& v) { c.data.binary = parse_bool(v); }},
      {"data.threshold_frac",
       [](RunConfig& c, const std::string& v) { c.data.threshold_frac = core::parse_double(v); }},

      {"model.map_width", [](RunConfig& c, const std::string& v) { c.model.map_width = parse_size(v); }},
      {"model.map_depth", [](RunConfig& c, const std::string& v) { c.model.map_depth = parse_size(v); }},
      {"model.disc_width",
       [](RunConfig& c, const std::string& v) { c.model.disc_width = parse_size(v); }},
      {"model.disc_depth",
       [](RunConfig& c, const std::string& v) { c.model.disc_depth = parse_size(v); }},
      {"model.sim_enc_width",
       [](RunConfig& c, const std::string& v) { c.model.sim_enc_width = parse_size(v); }},
      {"model.sim_head_width",
       [](RunConfig& c, const std::string& v) { c.model.sim_head_width = parse_size(v); }},

      {"weights.dyn", [](RunConfig& c, const std::string& v) { c.weights.dyn = core::parse_double(v); }},
      {"weights.dom", [](RunConfig& c, const std::string& v) { c.weights.dom = core::parse_double(v); }},
      {"weights.adv_action",
       [](RunConfig& c, const std::string& v) { c.weights.adv_action = core::parse_double(v); }},
      {"weights.adv_state",
       [](RunConfig& c, const std::string& v) { c.weights.adv_state = core::parse_double(v); }},
      {"weights.weak", [](RunConfig& c, const std::string& v) { c.weights.weak = core::parse_double(v); }},
      {"weights.horizon",
       [](RunConfig& c, const std::string& v) { c.weights.horizon = parse_size(v); }},

      {"train.p1_max_epochs",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p1_max_epochs = parse_size(v); }},
      {"train.p1_batch",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p1_batch = parse_size(v); }},
      {"train.p1_tol",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p1_tol = core::parse_double(v); }},
      {"train.p1_patience",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p1_patience = parse_size(v); }},
      {"train.lr_sim",
       [](RunConfig& c, const std::string& v) { c.train_cfg.lr_sim = core::parse_double(v); }},
      {"train.lr_forward",
       [](RunConfig& c, const std::string& v) { c.train_cfg.lr_forward = core::parse_double(v); }},
      {"train.p2_max_cycles",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p2_max_cycles = parse_size(v); }},
      {"train.n_state",
       [](RunConfig& c, const std::string& v) { c.train_cfg.n_state = parse_size(v); }},
      {"train.n_action",
       [](RunConfig& c, const std::string& v) { c.train_cfg.n_action = parse_size(v); }},
      {"train.batch", [](RunConfig& c, const std::string& v) { c.train_cfg.batch = parse_size(v); }},
      {"train.lr_maps",
       [](RunConfig& c, const std::string& v) { c.train_cfg.lr_maps = core::parse_double(v); }},
      {"train.lr_disc",
       [](RunConfig& c, const std::string& v) { c.train_cfg.lr_disc = core::parse_double(v); }},
      {"train.p2_tol",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p2_tol = core::parse_double(v); }},
      {"train.p2_patience",
       [](RunConfig& c, const std::string& v) { c.train_cfg.p2_patience = parse_size(v); }},
      {"train.checkpoint_every",
       [](RunConfig& c, const std::string& v) { c.train_cfg.checkpoint_every = parse_size(v); }},

      {"eval.episodes", [](RunConfig& c, const std::string& v) { c.eval.episodes = parse_size(v); }},
      {"eval.eval_horizon",
       [](RunConfig& c, const std::string& v) { c.eval.eval_horizon = parse_size(v); }},
      {"eval.eval_seeds",
       [](RunConfig& c, const std::string& v) { c.eval.eval_seeds = parse_size(v); }},
      {"eval.recovery_samples",
       [](RunConfig& c, const std::string& v) { c.eval.recovery_samples = parse_size(v); }},
      {"eval.misalign_states",
       [](RunConfig& c, const std::string& v) { c.eval.misalign_states = parse_size(v); }},
      {"eval.compounding_segments",
       [](RunConfig& c, const std::string& v) { c.eval.compounding_segments = parse_size(v); }},
      {"eval.compounding_tmax",
       [](RunConfig& c, const std::string& v) { c.eval.compounding_tmax = parse_size(v); }},

      {"sweep.axis", [](RunConfig& c, const std::string& v) { c.sweep.axis = v; }},
      {"sweep.methods", [](RunConfig& c, const std::string& v) { c.sweep.methods = parse_list(v); }},
      {"sweep.horizons",
       [](RunConfig& c, const std::string& v) {
         c.sweep.horizons.clear();
         for (const auto& t : parse_list(v)) c.sweep.horizons.push_back(parse_size(t));
       }},
      {"sweep.seeds",
       [](RunConfig& c, const std::string& v) {
         c.sweep.seeds.clear();
         for (const auto& t : parse_list(v)) c.sweep.seeds.push_back(parse_size(t));
       }},

      {"run.method", [](RunConfig& c, const std::string& v) { c.method = v; }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = parse_size(v); }},
      {"run.out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

struct MethodSpec {
  bool oracle = false;
  bool drop_weak = false;
  bool drop_dyn = false;
  std::size_t horizon = 0;  // 0 = keep configured
};

MethodSpec parse_method(const std::string& tag) {
  MethodSpec m;
  if (tag == "oracle") {
    m.oracle = true;
    return m;
  }
  if (tag == "cc") {
    m.drop_weak = true;
    m.drop_dyn = true;
    m.horizon = 1;
    return m;
  }
  auto parse_suffix = [&](const std::string& prefix) -> std::size_t {
    const std::string num = tag.substr(prefix.size());
    if (num.empty()) throw core::ConfigError("method tag '" + tag + "' is missing a horizon");
    return parse_size(num);
  };
  if (tag.rfind("dcc-", 0) == 0) {
    m.drop_weak = true;
    m.horizon = parse_suffix("dcc-");
    return m;
  }
  if (tag.rfind("weascl-", 0) == 0) {
    m.horizon = parse_suffix("weascl-");
    return m;
  }
  throw core::ConfigError("unknown method tag '" + tag +
                          "' (expected cc | dcc-T | weascl-T | oracle)");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw core::ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw core::ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    auto it = setters().find(full);
    if (it == setters().end())
      throw core::ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + full + "'");
    try {
      it->second(cfg, value);
    } catch (const core::ConfigError& e) {
      throw core::ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw core::ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

void RunConfig::validate() const {
  if (pair_name != "scaled" && pair_name != "mirror" && pair_name != "arm" && pair_name != "gain")
    throw core::ConfigError("pair.name must be one of scaled | mirror | arm | gain");
  if (data.rungs < 1 || data.trajs_per_rung < 1)
    throw core::ConfigError("data: rungs and trajs_per_rung must be >= 1");
  weights.validate();
  const losses::LossWeights eff = effective_weights();
  if (data.horizon < eff.horizon)
    throw core::ConfigError("data.horizon must be >= the dynamics-consistency horizon");
  if (data.horizon < eval.compounding_tmax)
    throw core::ConfigError("data.horizon must be >= eval.compounding_tmax");
  train_cfg.validate();
  (void)parse_method(method);
}

losses::LossWeights RunConfig::effective_weights() const {
  losses::LossWeights w = weights;
  const MethodSpec m = parse_method(method);
  if (m.drop_weak) w.weak = 0.0;
  if (m.drop_dyn) w.dyn = 0.0;
  if (m.horizon > 0) w.horizon = m.horizon;
  return w;
}

train::TrainConfig RunConfig::effective_train(std::uint64_t train_seed) const {
  train::TrainConfig cfg = train_cfg;
  cfg.weights = effective_weights();
  cfg.seed = train_seed;
  return cfg;
}

std::string RunConfig::hash() const {
  std::ostringstream os;
  os << "pair.name=" << pair_name << '\n';
  for (const auto& [k, v] : pair_params) os << "pair." << k << '=' << core::fmt_g17(v) << '\n';
  os << "data=" << data.rungs << ',' << data.trajs_per_rung << ',' << data.horizon << ','
     << data.n_pairs << ',' << core::fmt_g17(data.sigma_frac) << ',' << data.binary << ','
     << core::fmt_g17(data.threshold_frac) << '\n';
  os << "model=" << model.map_width << ',' << model.map_depth << ',' << model.disc_width << ','
     << model.disc_depth << ',' << model.sim_enc_width << ',' << model.sim_head_width << '\n';
  os << "weights=" << core::fmt_g17(weights.dyn) << ',' << core::fmt_g17(weights.dom) << ','
     << core::fmt_g17(weights.adv_action) << ',' << core::fmt_g17(weights.adv_state) << ','
     << core::fmt_g17(weights.weak) << ',' << weights.horizon << '\n';
  os << "train=" << train_cfg.p1_max_epochs << ',' << train_cfg.p1_batch << ','
     << core::fmt_g17(train_cfg.p1_tol) << ',' << train_cfg.p1_patience << ','
     << core::fmt_g17(train_cfg.lr_sim) << ',' << core::fmt_g17(train_cfg.lr_forward) << ','
     << train_cfg.p2_max_cycles << ',' << train_cfg.n_state << ',' << train_cfg.n_action << ','
     << train_cfg.batch << ',' << core::fmt_g17(train_cfg.lr_maps) << ','
     << core::fmt_g17(train_cfg.lr_disc) << ',' << core::fmt_g17(train_cfg.p2_tol) << ','
     << train_cfg.p2_patience << '\n';
  os << "eval=" << eval.episodes << ',' << eval.eval_horizon << ',' << eval.eval_seeds << ','
     << eval.recovery_samples << ',' << eval.misalign_states << ',' << eval.compounding_segments
     << ',' << eval.compounding_tmax << '\n';
  os << "method=" << method << '\n';
  os << "seed=" << seed << '\n';
  return core::hash_hex(core::fnv1a(os.str()));
}

std::string pair_signature(const envs::MdpPair& pair) {
  std::ostringstream os;
  os << pair.name;
  for (const auto& [k, v] : pair.params) os << ';' << k << '=' << core::fmt_g17(v);
  os << ";dims=" << pair.m1.state_dim << ',' << pair.m1.action_dim << ',' << pair.m2.state_dim
     << ',' << pair.m2.action_dim;
  return os.str();
}

envs::MdpPair make_pair_from(const RunConfig& cfg) {
  return envs::make_pair(cfg.pair_name, cfg.pair_params, cfg.seed);
}

BuiltData build_datasets(const envs::MdpPair& pair, const DataConfig& data, std::uint64_t seed) {
  core::Vec ladder(data.rungs);
  for (std::size_t i = 0; i < data.rungs; ++i)
    ladder[i] = data.rungs == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(data.rungs - 1);

  core::Rng rng(seed);
  BuiltData out;
  out.xi1 = data::collect_demos(pair, 1, ladder, data.trajs_per_rung, data.horizon,
                                rng.split("xi1").seed());
  out.xi2 = data::collect_demos(pair, 2, ladder, data.trajs_per_rung, data.horizon,
                                rng.split("xi2").seed());
  // Confidence labels feed the gain pair's abstraction and the data files.
  out.xi1 = data::confidence_labels(std::move(out.xi1));
  out.xi2 = data::confidence_labels(std::move(out.xi2));

  data::PairGenOptions opt;
  opt.n = data.n_pairs;
  opt.sigma_frac = data.sigma_frac;
  opt.binary = data.binary;
  opt.threshold_frac = data.threshold_frac;
  for (std::size_t k = 0; k < pair.k_state; ++k) {
    opt.seed = rng.split("ys-" + std::to_string(k)).seed();
    out.y_state.push_back(data::make_abstraction_pairs(pair, out.xi1, out.xi2, 's', k, opt));
  }
  for (std::size_t k = 0; k < pair.k_action; ++k) {
    opt.seed = rng.split("ya-" + std::to_string(k)).seed();
    out.y_action.push_back(data::make_abstraction_pairs(pair, out.xi1, out.xi2, 'a', k, opt));
  }
  return out;
}

}  // namespace wscl::config
