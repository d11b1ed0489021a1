#include "wscl/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

namespace wscl::train {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

/// Per-network Adam states keyed by name.
class Optimizers {
 public:
  void configure(const nn::Mlp& net, const nn::AdamConfig& cfg) {
    opts_.emplace(net.name(), nn::Adam(net.param_count(), cfg));
  }
  /// Applies gradients from a backward pass to every trainable binding.
  /// Returns false if any step was skipped on a non-finite gradient.
  bool apply(losses::Trainables& trainables) {
    bool ok = true;
    for (auto& [net, binding] : trainables.nets) {
      core::Vec grads = nn::Mlp::gradients(binding);
      ok = opts_.at(net->name()).step(net->params(), grads) && ok;
    }
    return ok;
  }

 private:
  std::map<std::string, nn::Adam> opts_;
};

struct ParamSnapshot {
  std::vector<core::Vec> params;
  static ParamSnapshot take(const std::vector<const nn::Mlp*>& nets) {
    ParamSnapshot s;
    for (const nn::Mlp* n : nets) s.params.push_back(n->params());
    return s;
  }
  void restore(const std::vector<nn::Mlp*>& nets) const {
    for (std::size_t i = 0; i < nets.size(); ++i) nets[i]->set_params(params[i]);
  }
};

double bce_value(double p, double v) {
  const double c = std::min(1.0 - 1e-7, std::max(1e-7, p));
  return -(v * std::log(c) + (1.0 - v) * std::log(1.0 - c));
}

}  // namespace

void TrainConfig::validate() const {
  if (n_state < 1 || n_action < 1)
    throw core::ConfigError("TrainConfig: inner loop counts must be >= 1");
  if (batch < 1 || p1_batch < 1) throw core::ConfigError("TrainConfig: batch size must be >= 1");
  weights.validate();
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("TrainLog: cannot open '" + path + "'");
  os << "phase,step,loss_adv_s,loss_adv_a,loss_dom,loss_mdyn,loss_weak,loss_total,wall_ms\n";
  for (const auto& r : records) {
    os << r.phase << ',' << r.step << ',' << core::fmt_g17(r.adv_s) << ',' << core::fmt_g17(r.adv_a)
       << ',' << core::fmt_g17(r.dom) << ',' << core::fmt_g17(r.mdyn) << ','
       << core::fmt_g17(r.weak) << ',' << core::fmt_g17(r.total) << ','
       << core::fmt_g17(r.wall_ms) << '\n';
  }
}

ConvergenceTracker::ConvergenceTracker(double tol, std::size_t patience, std::size_t window)
    : tol_(tol), patience_(patience), window_(window == 0 ? 1 : window) {}

bool ConvergenceTracker::update(double loss) {
  recent_.push_back(loss);
  if (recent_.size() > window_) recent_.erase(recent_.begin());
  double ma = 0.0;
  for (double v : recent_) ma += v;
  ma /= static_cast<double>(recent_.size());

  if (!has_best_) {
    best_ = ma;
    has_best_ = true;
    return false;
  }
  const double improvement = (best_ - ma) / std::max(1.0, std::fabs(best_));
  if (improvement < tol_) {
    ++streak_;
  } else {
    streak_ = 0;
  }
  if (ma < best_) best_ = ma;
  return converged();
}

bool convergence_check(const core::Vec& losses, double tol, std::size_t patience) {
  if (losses.size() < patience)
    throw core::InputError("convergence_check: window shorter than patience");
  ConvergenceTracker tracker(tol, patience);
  bool converged = false;
  for (double v : losses) converged = tracker.update(v);
  return converged;
}

// ---------------------------------------------------------------------------
// Phase 1
// ---------------------------------------------------------------------------

namespace {

/// Train one similarity net on the first 80% of the records; report held-out
/// BCE and thresholded accuracy on the rest.
struct SimTrainOutcome {
  bool converged = false;
  double holdout_bce = 0.0;
  double holdout_accuracy = 0.0;
};

SimTrainOutcome train_similarity(nn::SimilarityNet& net, const data::AbstractionPairSet& yset,
                                 const TrainConfig& cfg, core::Rng rng, TrainLog& log,
                                 const std::string& tag) {
  const std::size_t n = yset.records.size();
  const std::size_t split = std::max<std::size_t>(1, (n * 8) / 10);

  Optimizers opt;
  nn::AdamConfig ac{cfg.lr_sim, 0.9, 0.999, 1e-8};
  opt.configure(net.encoder1(), ac);
  opt.configure(net.encoder2(), ac);
  opt.configure(net.head(), ac);

  data::AbstractionPairSet train_part = yset;
  train_part.records.assign(yset.records.begin(), yset.records.begin() + split);
  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, (split + cfg.p1_batch - 1) / cfg.p1_batch);

  ConvergenceTracker tracker(cfg.p1_tol, cfg.p1_patience);
  bool converged = false;
  for (std::size_t epoch = 0; epoch < cfg.p1_max_epochs && !converged; ++epoch) {
    const double t0 = now_ms();
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      data::PairBatch batch = data::sample_pair_batch(train_part, cfg.p1_batch, rng);
      ad::Graph g;
      losses::LossValue loss = losses::similarity_loss(g, net, batch.x1, batch.x2, batch.labels);
      g.backward(loss.value);
      opt.apply(loss.trainables);
      epoch_loss += loss.value.scalar();
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    log.records.push_back(
        {tag, epoch, 0.0, 0.0, 0.0, 0.0, epoch_loss, epoch_loss, now_ms() - t0});
    converged = tracker.update(epoch_loss);
  }

  SimTrainOutcome out;
  out.converged = converged;
  std::size_t correct = 0;
  double bce = 0.0;
  const std::size_t held = n - split;
  for (std::size_t i = split; i < n; ++i) {
    const auto& rec = yset.records[i];
    const double p = net.forward_value(rec.x1, rec.x2);
    bce += bce_value(p, rec.label);
    if ((p >= 0.5) == (rec.label >= 0.5)) ++correct;
  }
  out.holdout_bce = held > 0 ? bce / static_cast<double>(held) : 0.0;
  out.holdout_accuracy = held > 0 ? static_cast<double>(correct) / static_cast<double>(held) : 1.0;
  return out;
}

}  // namespace

Phase1Result train_phase1(losses::TranslationModel& model, const data::TrajectorySet& xi2,
                          const std::vector<data::AbstractionPairSet>& y_state,
                          const std::vector<data::AbstractionPairSet>& y_action,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (y_state.size() != model.sim_state.size() || y_action.size() != model.sim_action.size())
    throw core::InputError("train_phase1: pair-set count does not match similarity nets");
  if (xi2.trajs.empty()) throw core::InputError("train_phase1: empty demonstration set for agent 2");

  Phase1Result out;
  out.status = "converged";
  core::Rng rng = core::Rng(cfg.seed).split("phase1");

  for (std::size_t k = 0; k < y_state.size(); ++k) {
    SimTrainOutcome o = train_similarity(model.sim_state[k], y_state[k], cfg,
                                         rng.split("sim-s" + std::to_string(k)), out.log,
                                         "p1-sim-s" + std::to_string(k));
    if (!o.converged) out.status = "max-epochs";
    out.sim_holdout_bce.push_back(o.holdout_bce);
    out.sim_holdout_accuracy.push_back(o.holdout_accuracy);
  }
  for (std::size_t k = 0; k < y_action.size(); ++k) {
    SimTrainOutcome o = train_similarity(model.sim_action[k], y_action[k], cfg,
                                         rng.split("sim-a" + std::to_string(k)), out.log,
                                         "p1-sim-a" + std::to_string(k));
    if (!o.converged) out.status = "max-epochs";
    out.sim_holdout_bce.push_back(o.holdout_bce);
    out.sim_holdout_accuracy.push_back(o.holdout_accuracy);
  }

  // Forward model on (s,a,s') triples; the last fifth of the trajectories is
  // held out for the reported fit.
  data::TrajectorySet train_xi = xi2;
  data::TrajectorySet held_xi = xi2;
  const std::size_t split = std::max<std::size_t>(1, (xi2.trajs.size() * 8) / 10);
  train_xi.trajs.assign(xi2.trajs.begin(), xi2.trajs.begin() + split);
  held_xi.trajs.assign(xi2.trajs.begin() + split, xi2.trajs.end());

  Optimizers opt;
  opt.configure(model.t2hat, nn::AdamConfig{cfg.lr_forward, 0.9, 0.999, 1e-8});
  core::Rng frng = rng.split("forward");
  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, train_xi.total_steps() / cfg.p1_batch);
  ConvergenceTracker tracker(cfg.p1_tol, cfg.p1_patience);
  bool converged = false;
  for (std::size_t epoch = 0; epoch < cfg.p1_max_epochs && !converged; ++epoch) {
    const double t0 = now_ms();
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      data::SegmentBatch seg = data::sample_segments(train_xi, 1, cfg.p1_batch, frng);
      ad::Graph g;
      losses::LossValue loss =
          losses::forward_model_loss(g, model, seg.states[0], seg.actions[0], seg.states[1]);
      g.backward(loss.value);
      opt.apply(loss.trainables);
      epoch_loss += loss.value.scalar();
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    out.log.records.push_back(
        {"p1-forward", epoch, 0.0, 0.0, 0.0, epoch_loss, 0.0, epoch_loss, now_ms() - t0});
    converged = tracker.update(epoch_loss);
  }
  if (!converged) out.status = "max-epochs";

  // Held-out fit of the learned dynamics.
  double mse = 0.0;
  std::size_t count = 0;
  for (const auto& tr : held_xi.trajs) {
    for (std::size_t t = 0; t < tr.actions.size(); ++t) {
      core::Vec in = tr.states[t];
      in.insert(in.end(), tr.actions[t].begin(), tr.actions[t].end());
      core::Vec pred = model.t2hat.forward_value(in);
      double e = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i)
        e += (pred[i] - tr.states[t + 1][i]) * (pred[i] - tr.states[t + 1][i]);
      mse += e;
      ++count;
    }
  }
  out.forward_holdout_mse = count > 0 ? mse / static_cast<double>(count) : 0.0;
  out.log.status = out.status;
  if (!cfg.log_path.empty()) out.log.write_csv(cfg.log_path);
  return out;
}

// ---------------------------------------------------------------------------
// Phase 2
// ---------------------------------------------------------------------------

Phase2Result train_phase2(losses::TranslationModel& model, const data::TrajectorySet& xi1,
                          const data::TrajectorySet& xi2, const TrainConfig& cfg) {
  cfg.validate();
  if (xi1.trajs.empty() || xi2.trajs.empty())
    throw core::InputError("train_phase2: empty demonstration set");
  const std::size_t T = cfg.weights.horizon;
  for (const auto& tr : xi1.trajs)
    if (tr.actions.size() < T)
      throw core::InputError("train_phase2: trajectory shorter than the consistency horizon");

  Phase2Result out;
  core::Rng rng = core::Rng(cfg.seed).split("phase2");

  Optimizers opt;
  const nn::AdamConfig map_cfg{cfg.lr_maps, 0.9, 0.999, 1e-8};
  const nn::AdamConfig disc_cfg{cfg.lr_disc, cfg.beta1_disc, 0.999, 1e-8};
  opt.configure(model.phi, map_cfg);
  opt.configure(model.phi_inv, map_cfg);
  opt.configure(model.h1, map_cfg);
  opt.configure(model.h2, map_cfg);
  opt.configure(model.d_s, disc_cfg);
  opt.configure(model.d_a1, disc_cfg);
  opt.configure(model.d_a2, disc_cfg);

  const bool use_weak =
      cfg.weights.weak > 0.0 && (!model.sim_state.empty() || !model.sim_action.empty());

  auto sample_phase_batches = [&](losses::Phase phase) {
    losses::PhaseBatches b;
    if (phase == losses::Phase::State) {
      b.adv_s1 = data::sample_states(xi1, cfg.batch, rng);
      b.adv_s2 = data::sample_states(xi2, cfg.batch, rng);
      b.recon_s1 = data::sample_states(xi1, cfg.batch, rng);
    } else {
      auto sa1 = data::sample_state_actions(xi1, cfg.batch, rng);
      auto sa2 = data::sample_state_actions(xi2, cfg.batch, rng);
      b.adv_a.s1 = std::move(sa1.s);
      b.adv_a.a1 = std::move(sa1.a);
      b.adv_a.s2 = std::move(sa2.s);
      b.adv_a.a2 = std::move(sa2.a);
      b.adv_a.a1_real = data::sample_state_actions(xi1, cfg.batch, rng).a;
      b.adv_a.a2_real = data::sample_state_actions(xi2, cfg.batch, rng).a;
      auto dom1 = data::sample_state_actions(xi1, cfg.batch, rng);
      auto dom2 = data::sample_state_actions(xi2, cfg.batch, rng);
      b.dom_s1 = std::move(dom1.s);
      b.dom_a1 = std::move(dom1.a);
      b.dom_s2 = std::move(dom2.s);
      b.dom_a2 = std::move(dom2.a);
    }
    if (cfg.weights.dyn > 0.0) b.segments = data::sample_segments(xi1, T, cfg.batch, rng);
    if (use_weak) {
      b.weak_s1 = data::sample_states(xi1, cfg.batch, rng);
      auto wsa = data::sample_state_actions(xi1, cfg.batch, rng);
      b.weak_sa_s = std::move(wsa.s);
      b.weak_sa_a = std::move(wsa.a);
    }
    return b;
  };

  ParamSnapshot last_good = ParamSnapshot::take(model.all_nets());
  auto mutable_nets = [&]() {
    std::vector<nn::Mlp*> nets{&model.phi, &model.h1, &model.h2, &model.phi_inv,
                               &model.d_s, &model.d_a1, &model.d_a2, &model.t2hat};
    for (auto& s : model.sim_state) {
      nets.push_back(&s.encoder1());
      nets.push_back(&s.encoder2());
      nets.push_back(&s.head());
    }
    for (auto& s : model.sim_action) {
      nets.push_back(&s.encoder1());
      nets.push_back(&s.encoder2());
      nets.push_back(&s.head());
    }
    return nets;
  };

  ConvergenceTracker tracker(cfg.p2_tol, cfg.p2_patience);
  out.status = "cycle-cap";
  std::size_t global_step = 0;

  for (std::size_t cycle = 0; cycle < cfg.p2_max_cycles; ++cycle) {
    double cycle_loss = 0.0;
    bool aborted = false;

    auto run_inner = [&](losses::Phase phase, std::size_t iterations) {
      for (std::size_t i = 0; i < iterations && !aborted; ++i) {
        const double t0 = now_ms();
        losses::PhaseBatches batches = sample_phase_batches(phase);
        ad::Graph g;
        losses::TotalLoss total = losses::total_map_loss(g, model, batches, cfg.weights, phase);
        const double value = total.value.scalar();
        if (!std::isfinite(value)) {
          core::log_error("train_phase2: non-finite loss, aborting");
          aborted = true;
          break;
        }
        g.backward(total.value);
        opt.apply(total.trainables);

        // Discriminator step on fresh batches.
        ad::Graph gd;
        if (phase == losses::Phase::State) {
          if (cfg.weights.adv_state > 0.0) {
            losses::LossValue d = losses::adv_state_loss(
                gd, model, data::sample_states(xi1, cfg.batch, rng),
                data::sample_states(xi2, cfg.batch, rng), losses::Side::Discriminator);
            gd.backward(d.value);
            opt.apply(d.trainables);
          }
        } else {
          if (cfg.weights.adv_action > 0.0) {
            losses::AdvActionBatches ab;
            auto sa1 = data::sample_state_actions(xi1, cfg.batch, rng);
            auto sa2 = data::sample_state_actions(xi2, cfg.batch, rng);
            ab.s1 = std::move(sa1.s);
            ab.a1 = std::move(sa1.a);
            ab.s2 = std::move(sa2.s);
            ab.a2 = std::move(sa2.a);
            ab.a1_real = data::sample_state_actions(xi1, cfg.batch, rng).a;
            ab.a2_real = data::sample_state_actions(xi2, cfg.batch, rng).a;
            losses::LossValue d = losses::adv_action_loss(gd, model, ab, losses::Side::Discriminator);
            gd.backward(d.value);
            opt.apply(d.trainables);
          }
        }

        out.log.records.push_back({phase == losses::Phase::State ? "state" : "action",
                                   global_step++, total.adv_s, total.adv_a, total.dom, total.mdyn,
                                   total.weak, value, now_ms() - t0});
        cycle_loss += value;
        if (cfg.observer) cfg.observer(phase, cycle, i);
      }
    };

    run_inner(losses::Phase::State, cfg.n_state);
    run_inner(losses::Phase::Action, cfg.n_action);

    if (aborted) {
      last_good.restore(mutable_nets());
      out.status = "aborted";
      break;
    }
    last_good = ParamSnapshot::take(model.all_nets());
    out.cycles = cycle + 1;

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (cycle + 1) % cfg.checkpoint_every == 0) {
      nn::save_checkpoint(model.all_nets(), cfg.checkpoint_path, {"phase2", "", ""});
    }

    cycle_loss /= static_cast<double>(cfg.n_state + cfg.n_action);
    if (tracker.update(cycle_loss)) {
      out.status = "converged";
      break;
    }
  }

  out.log.status = out.status;
  if (!cfg.log_path.empty()) out.log.write_csv(cfg.log_path);
  return out;
}

}  // namespace wscl::train
