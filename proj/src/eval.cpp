#include "wscl/eval.hpp"

#include <cmath>
#include <fstream>

namespace wscl::eval {

namespace {

double l2(const core::Vec& a, const core::Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

core::Vec neg(const core::Vec& v) {
  core::Vec out = v;
  for (auto& x : out) x = -x;
  return out;
}

}  // namespace

MapsView model_view(const losses::TranslationModel& model) {
  MapsView view;
  view.phi = [&model](const core::Vec& s) { return model.phi.forward_value(s); };
  view.h1 = [&model](const core::Vec& s, const core::Vec& a) {
    core::Vec in = s;
    in.insert(in.end(), a.begin(), a.end());
    return model.h1.forward_value(in);
  };
  view.h2 = [&model](const core::Vec& s, const core::Vec& a) {
    core::Vec in = s;
    in.insert(in.end(), a.begin(), a.end());
    return model.h2.forward_value(in);
  };
  return view;
}

MapsView oracle_view(const envs::MdpPair& pair) {
  if (!pair.gt) throw core::InputError("oracle_view: pair '" + pair.name + "' has no ground truth");
  return MapsView{pair.gt->phi, pair.gt->h1, pair.gt->h2};
}

Metric aggregate(const std::string& name, const std::vector<double>& values) {
  Metric m;
  m.name = name;
  m.per_seed = values;
  m.seeds = values.size();
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() == 1) {
    core::log_info("metric '" + name + "': single seed, sd reported as 0");
    return m;
  }
  double var = 0.0;
  for (double v : values) var += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(var / static_cast<double>(values.size() - 1));
  return m;
}

Metric translated_policy_return(const envs::MdpPair& pair, const MapsView& maps,
                                std::size_t episodes, std::size_t horizon,
                                const std::vector<std::uint64_t>& seeds) {
  std::vector<double> per_seed;
  for (std::uint64_t seed : seeds) {
    core::Rng rng = core::Rng(seed).split("eval/translated");
    envs::Policy oracle = envs::scripted_policy(pair, 2, 1.0, rng.next_u64());
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      core::Vec s = pair.m1.init_state(rng);
      double ret = 0.0;
      for (std::size_t t = 0; t < horizon; ++t) {
        const core::Vec mapped = maps.phi(s);
        if (mapped.size() != pair.m2.state_dim)
          throw core::InputError("translated_policy_return: state map output dim mismatch");
        const core::Vec a2 = oracle.act(mapped);
        const core::Vec a1 = maps.h2(mapped, a2);
        if (a1.size() != pair.m1.action_dim)
          throw core::InputError("translated_policy_return: action map output dim mismatch");
        ret += pair.m1.reward(s, a1);
        s = envs::step(pair.m1, s, a1);
      }
      total += ret;
    }
    per_seed.push_back(total / static_cast<double>(episodes));
  }
  return aggregate("translated_return", per_seed);
}

Metric native_policy_return(const envs::MdpPair& pair, int agent, double quality,
                            std::size_t episodes, std::size_t horizon,
                            const std::vector<std::uint64_t>& seeds) {
  const envs::MdpSpec& spec = agent == 1 ? pair.m1 : pair.m2;
  std::vector<double> per_seed;
  for (std::uint64_t seed : seeds) {
    core::Rng rng = core::Rng(seed).split("eval/native");
    envs::Policy policy = envs::scripted_policy(pair, agent, quality, rng.next_u64());
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      core::Vec s0 = spec.init_state(rng);
      total += envs::rollout(spec, policy, s0, horizon).ret;
    }
    per_seed.push_back(total / static_cast<double>(episodes));
  }
  return aggregate("native_return_q" + core::fmt_g17(quality), per_seed);
}

std::vector<double> compounding_error_curve(const envs::MdpPair& pair, const MapsView& maps,
                                            const data::SegmentBatch& segments) {
  const std::size_t T = segments.horizon();
  const std::size_t batch = segments.batch();
  if (T == 0 || batch == 0) throw core::InputError("compounding_error_curve: empty segments");
  std::vector<double> curve(T, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    core::Vec rolled = maps.phi(segments.states[0].row(b));
    for (std::size_t tau = 1; tau <= T; ++tau) {
      const core::Vec s1 = segments.states[tau - 1].row(b);
      const core::Vec a1 = segments.actions[tau - 1].row(b);
      // True m2 dynamics: map error is isolated from model error.
      rolled = pair.m2.transition(rolled, maps.h1(s1, a1));
      curve[tau - 1] += l2(maps.phi(segments.states[tau].row(b)), rolled);
    }
  }
  for (auto& d : curve) d /= static_cast<double>(batch);
  return curve;
}

double misalignment_score(const envs::MdpPair& pair,
                          const std::function<core::Vec(const core::Vec&)>& phi,
                          const std::vector<core::Vec>& eval_states) {
  if (!pair.gt)
    throw core::InputError("misalignment_score: pair '" + pair.name + "' has no ground truth");
  if (eval_states.empty()) throw core::InputError("misalignment_score: no eval states");
  std::size_t correct = 0;
  for (const core::Vec& s : eval_states) {
    const core::Vec mapped = phi(s);
    const double d_true = l2(mapped, pair.gt->phi(s));
    const double d_mirror = l2(mapped, pair.gt->phi(neg(s)));
    // Ties (margin 1e-12) count as incorrect.
    if (d_mirror - d_true > 1e-12) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_states.size());
}

std::vector<core::Vec> sample_eval_states(const envs::MdpSpec& spec, std::size_t n,
                                          std::uint64_t seed) {
  core::Rng rng = core::Rng(seed).split("eval/states");
  std::vector<core::Vec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    core::Vec s(spec.state_dim);
    for (std::size_t d = 0; d < spec.state_dim; ++d)
      s[d] = rng.uniform(spec.state_low[d], spec.state_high[d]);
    out.push_back(std::move(s));
  }
  return out;
}

RecoveryError map_recovery_error(const envs::MdpPair& pair, const MapsView& maps, std::size_t n,
                                 std::uint64_t seed) {
  if (!pair.gt)
    throw core::InputError("map_recovery_error: pair '" + pair.name + "' has no ground truth");
  core::Rng rng = core::Rng(seed).split("eval/recovery");
  RecoveryError out;
  for (std::size_t i = 0; i < n; ++i) {
    core::Vec s(pair.m1.state_dim), a(pair.m1.action_dim);
    for (std::size_t d = 0; d < s.size(); ++d)
      s[d] = rng.uniform(pair.m1.state_low[d], pair.m1.state_high[d]);
    for (std::size_t d = 0; d < a.size(); ++d)
      a[d] = rng.uniform(pair.m1.action_low[d], pair.m1.action_high[d]);
    out.state_err += l2(maps.phi(s), pair.gt->phi(s));
    out.action_err += l2(maps.h1(s, a), pair.gt->h1(s, a));
  }
  out.state_err /= static_cast<double>(n);
  out.action_err /= static_cast<double>(n);
  out.state_err_norm = out.state_err / pair.m2.state_diameter();
  double adiam = 0.0;
  for (std::size_t d = 0; d < pair.m2.action_dim; ++d)
    adiam += (pair.m2.action_high[d] - pair.m2.action_low[d]) *
             (pair.m2.action_high[d] - pair.m2.action_low[d]);
  out.action_err_norm = out.action_err / std::sqrt(adiam);
  return out;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("write_report_csv: cannot open '" + path + "'");
  os << "pair,method,metric,mean,sd,seeds\n";
  for (const auto& m : report.metrics) {
    os << report.pair << ',' << report.method << ',' << m.name << ',' << core::fmt_g17(m.mean)
       << ',' << core::fmt_g17(m.sd) << ',' << m.seeds << '\n';
  }
}

void write_curve_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("write_curve_csv: cannot open '" + path + "'");
  os << "tau,distance\n";
  for (std::size_t i = 0; i < curve.size(); ++i)
    os << (i + 1) << ',' << core::fmt_g17(curve[i]) << '\n';
}

std::vector<HorizonCell> horizon_sweep(const envs::MdpPair& pair, const data::TrajectorySet& xi1,
                                       const data::TrajectorySet& xi2,
                                       const std::vector<std::size_t>& horizons,
                                       const HorizonSweepSetup& setup) {
  if (horizons.empty()) throw core::InputError("horizon_sweep: empty horizon list");
  for (std::size_t i = 1; i < horizons.size(); ++i)
    if (horizons[i] <= horizons[i - 1])
      throw core::InputError("horizon_sweep: horizons must be sorted ascending");
  if (setup.phase1_model == nullptr)
    throw core::InputError("horizon_sweep: phase-1 model required");

  std::vector<HorizonCell> table;
  for (std::size_t T : horizons) {
    HorizonCell cell;
    cell.T = T;
    std::vector<double> returns;
    for (std::uint64_t seed : setup.train_seeds) {
      // Fresh maps per cell; phase-1 outputs are reused unchanged.
      losses::TranslationModel model = losses::TranslationModel::create(pair, setup.dims, seed);
      model.t2hat = setup.phase1_model->t2hat;
      model.sim_state = setup.phase1_model->sim_state;
      model.sim_action = setup.phase1_model->sim_action;

      train::TrainConfig cfg = setup.train_cfg;
      cfg.weights.horizon = T;
      cfg.seed = seed;
      cfg.log_path.clear();
      try {
        train::Phase2Result res = train_phase2(model, xi1, xi2, cfg);
        cell.statuses.push_back(res.status);
        if (res.status == "aborted") continue;
      } catch (const std::exception& e) {
        cell.statuses.push_back(std::string("failed: ") + e.what());
        continue;
      }
      Metric ret = translated_policy_return(pair, model_view(model), setup.episodes,
                                            setup.eval_horizon, setup.eval_seeds);
      returns.push_back(ret.mean);
    }
    cell.ret = aggregate("translated_return_T" + std::to_string(T), returns);
    table.push_back(std::move(cell));
  }
  return table;
}

}  // namespace wscl::eval
