#include "wscl/losses.hpp"

#include <cmath>
#include <memory>

namespace wscl::losses {

void LossWeights::validate() const {
  if (dyn < 0.0 || dom < 0.0 || adv_action < 0.0 || adv_state < 0.0 || weak < 0.0)
    throw core::ConfigError("LossWeights: weights must be non-negative");
  if (horizon < 1) throw core::ConfigError("LossWeights: horizon T must be >= 1");
}

namespace {

std::vector<std::size_t> hidden_stack(std::size_t in, std::size_t width, std::size_t depth,
                                      std::size_t out) {
  std::vector<std::size_t> sizes{in};
  for (std::size_t i = 0; i < depth; ++i) sizes.push_back(width);
  sizes.push_back(out);
  return sizes;
}

void require_rows(const core::Mat& m, const char* what) {
  if (m.rows == 0) throw core::InputError(std::string(what) + ": empty batch");
}

}  // namespace

TranslationModel TranslationModel::create(const envs::MdpPair& pair, const ModelDims& dims,
                                          std::uint64_t seed) {
  const std::size_t s1 = pair.m1.state_dim, a1 = pair.m1.action_dim;
  const std::size_t s2 = pair.m2.state_dim, a2 = pair.m2.action_dim;
  TranslationModel m;
  m.phi = nn::Mlp("state-map", "state-map", hidden_stack(s1, dims.map_width, dims.map_depth, s2),
                  nn::Activation::Tanh, nn::OutputActivation::Identity, seed);
  m.h1 = nn::Mlp("action-map-1", "action-map-1",
                 hidden_stack(s1 + a1, dims.map_width, dims.map_depth, a2), nn::Activation::Tanh,
                 nn::OutputActivation::Identity, seed + 1);
  m.h2 = nn::Mlp("action-map-2", "action-map-2",
                 hidden_stack(s2 + a2, dims.map_width, dims.map_depth, a1), nn::Activation::Tanh,
                 nn::OutputActivation::Identity, seed + 2);
  m.phi_inv = nn::Mlp("inverse-map", "inverse-map",
                      hidden_stack(s2, dims.map_width, dims.map_depth, s1), nn::Activation::Tanh,
                      nn::OutputActivation::Identity, seed + 3);
  m.d_s = nn::Mlp("disc-state", "disc-state", hidden_stack(s2, dims.disc_width, dims.disc_depth, 1),
                  nn::Activation::Relu, nn::OutputActivation::Sigmoid, seed + 4);
  m.d_a1 = nn::Mlp("disc-action-1", "disc-action-1",
                   hidden_stack(a1, dims.disc_width, dims.disc_depth, 1), nn::Activation::Relu,
                   nn::OutputActivation::Sigmoid, seed + 5);
  m.d_a2 = nn::Mlp("disc-action-2", "disc-action-2",
                   hidden_stack(a2, dims.disc_width, dims.disc_depth, 1), nn::Activation::Relu,
                   nn::OutputActivation::Sigmoid, seed + 6);
  m.t2hat = nn::Mlp("forward-model", "forward-model",
                    hidden_stack(s2 + a2, dims.map_width, dims.map_depth, s2), nn::Activation::Tanh,
                    nn::OutputActivation::Identity, seed + 7);
  for (std::size_t k = 0; k < pair.k_state; ++k)
    m.sim_state.emplace_back("sim-state-" + std::to_string(k), "sim-state-" + std::to_string(k), s1,
                             s2, dims.sim_enc_width, dims.sim_head_width, seed + 100 + k);
  for (std::size_t k = 0; k < pair.k_action; ++k)
    m.sim_action.emplace_back("sim-action-" + std::to_string(k), "sim-action-" + std::to_string(k),
                              s1 + a1, s2 + a2, dims.sim_enc_width, dims.sim_head_width,
                              seed + 200 + k);
  return m;
}

std::vector<const nn::Mlp*> TranslationModel::phase1_nets() const {
  std::vector<const nn::Mlp*> out{&t2hat};
  for (const auto& s : sim_state) {
    out.push_back(&s.encoder1());
    out.push_back(&s.encoder2());
    out.push_back(&s.head());
  }
  for (const auto& s : sim_action) {
    out.push_back(&s.encoder1());
    out.push_back(&s.encoder2());
    out.push_back(&s.head());
  }
  return out;
}

std::vector<const nn::Mlp*> TranslationModel::map_nets() const {
  return {&phi, &h1, &h2, &phi_inv, &d_s, &d_a1, &d_a2};
}

std::vector<const nn::Mlp*> TranslationModel::all_nets() const {
  std::vector<const nn::Mlp*> out = map_nets();
  for (const nn::Mlp* n : phase1_nets()) out.push_back(n);
  return out;
}

void TranslationModel::adopt(const nn::LoadedCheckpoint& ckpt) {
  auto take = [&](nn::Mlp& dst) {
    if (const nn::Mlp* src = ckpt.find(dst.name()); src != nullptr) {
      if (src->layer_sizes() != dst.layer_sizes())
        throw core::InputError("checkpoint: layer sizes for '" + dst.name() +
                               "' do not match the model");
      dst = *src;
    }
  };
  take(phi);
  take(h1);
  take(h2);
  take(phi_inv);
  take(d_s);
  take(d_a1);
  take(d_a2);
  take(t2hat);
  for (auto& s : sim_state) {
    take(s.encoder1());
    take(s.encoder2());
    take(s.head());
  }
  for (auto& s : sim_action) {
    take(s.encoder1());
    take(s.encoder2());
    take(s.head());
  }
}

// ---------------------------------------------------------------------------
// Cores
// ---------------------------------------------------------------------------

SegmentTensors to_tensors(ad::Graph& g, const data::SegmentBatch& batch) {
  SegmentTensors seg;
  for (const auto& s : batch.states) seg.states.push_back(g.constant(s));
  for (const auto& a : batch.actions) seg.actions.push_back(g.constant(a));
  return seg;
}

namespace {

ad::Tensor mean_sq_to_target(const ad::Tensor& d_out, double target) {
  ad::Graph& g = d_out.graph();
  ad::Tensor t = g.constant({d_out.rows(), d_out.cols()},
                            core::Vec(d_out.size(), target));
  return ad::mean(ad::square(ad::sub(d_out, t)));
}

}  // namespace

ad::Tensor adv_state_core(const Fn1& phi, const Fn1& d_s, const ad::Tensor& s1,
                          const ad::Tensor& s2, Side side) {
  if (side == Side::Discriminator) {
    ad::Tensor real = mean_sq_to_target(d_s(s2), 1.0);
    ad::Tensor fake = mean_sq_to_target(d_s(phi(s1)), 0.0);
    return ad::add(real, fake);
  }
  return mean_sq_to_target(d_s(phi(s1)), 1.0);
}

ad::Tensor adv_action_core(const Fn2& h1, const Fn2& h2, const Fn1& d_a1, const Fn1& d_a2,
                           const ad::Tensor& a2_real, const ad::Tensor& s1, const ad::Tensor& a1,
                           const ad::Tensor& a1_real, const ad::Tensor& s2, const ad::Tensor& a2,
                           Side side) {
  ad::Tensor fake_a2 = h1(s1, a1);
  ad::Tensor fake_a1 = h2(s2, a2);
  if (side == Side::Discriminator) {
    ad::Tensor pair2 = ad::add(mean_sq_to_target(d_a2(a2_real), 1.0),
                               mean_sq_to_target(d_a2(fake_a2), 0.0));
    ad::Tensor pair1 = ad::add(mean_sq_to_target(d_a1(a1_real), 1.0),
                               mean_sq_to_target(d_a1(fake_a1), 0.0));
    return ad::add(pair2, pair1);
  }
  return ad::add(mean_sq_to_target(d_a2(fake_a2), 1.0), mean_sq_to_target(d_a1(fake_a1), 1.0));
}

ad::Tensor domain_cycle_core(const Fn1& phi, const Fn2& h1, const Fn2& h2, const Fn1& phi_inv,
                             const ad::Tensor& s1, const ad::Tensor& a1, const ad::Tensor& s2,
                             const ad::Tensor& a2) {
  ad::Tensor back1 = h2(phi(s1), h1(s1, a1));
  ad::Tensor term1 = ad::mean_l1_rows(ad::sub(back1, a1));
  ad::Tensor back2 = h1(phi_inv(s2), h2(s2, a2));
  ad::Tensor term2 = ad::mean_l1_rows(ad::sub(back2, a2));
  return ad::add(term1, term2);
}

ad::Tensor recon_core(const Fn1& phi, const Fn1& phi_inv, const ad::Tensor& s1) {
  return ad::mean_l1_rows(ad::sub(phi_inv(phi(s1)), s1));
}

ad::Tensor forward_model_core(const Fn2& t2, const ad::Tensor& s, const ad::Tensor& a,
                              const ad::Tensor& s_next) {
  return ad::mean_sq_l2_rows(ad::sub(s_next, t2(s, a)));
}

ad::Tensor multi_step_core(const Fn1& phi, const Fn2& h1, const Fn2& t2,
                           const SegmentTensors& seg) {
  if (seg.actions.empty() || seg.states.size() != seg.actions.size() + 1)
    throw core::InputError("multi_step_core: segment too short");
  const std::size_t T = seg.actions.size();
  ad::Tensor rolled = phi(seg.states[0]);
  ad::Tensor total;
  for (std::size_t tau = 1; tau <= T; ++tau) {
    ad::Tensor translated_action = h1(seg.states[tau - 1], seg.actions[tau - 1]);
    rolled = t2(rolled, translated_action);
    ad::Tensor term = ad::mean_l1_rows(ad::sub(phi(seg.states[tau]), rolled));
    total = tau == 1 ? term : ad::add(total, term);
  }
  return total;
}

ad::Tensor bce_core(const ad::Tensor& pred, const ad::Tensor& labels) {
  ad::Graph& g = pred.graph();
  const std::size_t n = pred.size();
  ad::Tensor ones = g.constant(pred.shape(), core::Vec(n, 1.0));
  ad::Tensor p = ad::clamp(pred, 1e-7, 1.0 - 1e-7);
  ad::Tensor pos = ad::mul(labels, ad::log(p));
  ad::Tensor neg = ad::mul(ad::sub(ones, labels), ad::log(ad::sub(ones, p)));
  return ad::scale(ad::mean(ad::add(pos, neg)), -1.0);
}

ad::Tensor weak_core(const Fn1& phi, const Fn2& h1, const std::vector<Fn2>& sim_s,
                     const std::vector<Fn4>& sim_a, const ad::Tensor& s1, const ad::Tensor& sa_s,
                     const ad::Tensor& sa_a) {
  if (sim_s.empty() && sim_a.empty())
    throw core::InputError("weak_core: no similarity functions available");
  ad::Tensor total;
  bool first = true;
  if (!sim_s.empty()) {
    ad::Tensor mapped = phi(s1);
    for (const auto& sim : sim_s) {
      ad::Tensor term = ad::scale(ad::mean(sim(s1, mapped)), -1.0);
      total = first ? term : ad::add(total, term);
      first = false;
    }
  }
  if (!sim_a.empty()) {
    ad::Tensor mapped_s = phi(sa_s);
    ad::Tensor mapped_a = h1(sa_s, sa_a);
    for (const auto& sim : sim_a) {
      ad::Tensor term = ad::scale(ad::mean(sim(sa_s, sa_a, mapped_s, mapped_a)), -1.0);
      total = first ? term : ad::add(total, term);
      first = false;
    }
  }
  return total;
}

Fn1 linear_fn(ad::Graph& g, const core::Mat& a) {
  ad::Tensor m = g.constant(a);
  return [m](const ad::Tensor& x) { return ad::matmul(x, m); };
}

Fn2 action_linear_fn(ad::Graph& g, const core::Mat& a) {
  ad::Tensor m = g.constant(a);
  return [m](const ad::Tensor&, const ad::Tensor& act) { return ad::matmul(act, m); };
}

Fn2 integrator_fn(ad::Graph& g, const core::Mat& gain, double dt) {
  ad::Tensor m = g.constant(gain);
  return [m, dt](const ad::Tensor& s, const ad::Tensor& a) {
    return ad::add(s, ad::scale(ad::matmul(a, m), dt));
  };
}

Fn1 mlp_fn(const nn::Mlp& net, const nn::MlpBinding& binding) {
  return [&net, binding](const ad::Tensor& x) { return net.forward(binding, x); };
}

Fn2 mlp_fn2(const nn::Mlp& net, const nn::MlpBinding& binding) {
  return [&net, binding](const ad::Tensor& s, const ad::Tensor& a) {
    return net.forward(binding, ad::concat(s, a));
  };
}

// ---------------------------------------------------------------------------
// Model-level operations
// ---------------------------------------------------------------------------

void Trainables::add(nn::Mlp& net, nn::MlpBinding binding) {
  nets.emplace_back(&net, std::move(binding));
}

LossValue adv_state_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                         const core::Mat& s2, Side side) {
  require_rows(s1, "adv_state_loss");
  require_rows(s2, "adv_state_loss");
  ad::Tensor ts1 = g.constant(s1), ts2 = g.constant(s2);
  LossValue out;
  if (side == Side::Generator) {
    nn::MlpBinding bphi;
    ad::Tensor mapped = model.phi.forward(g, ts1, true, &bphi);
    Fn1 phi = [&mapped](const ad::Tensor&) { return mapped; };
    Fn1 ds = mlp_fn(model.d_s, model.d_s.bind(g, false));
    out.value = adv_state_core(phi, ds, ts1, ts2, side);
    out.trainables.add(model.phi, std::move(bphi));
  } else {
    // Fakes contribute values only; the state map stays frozen here.
    Fn1 phi = mlp_fn(model.phi, model.phi.bind(g, false));
    nn::MlpBinding bds = model.d_s.bind(g, true);
    Fn1 ds = mlp_fn(model.d_s, bds);
    out.value = adv_state_core(phi, ds, ts1, ts2, side);
    out.trainables.add(model.d_s, std::move(bds));
  }
  return out;
}

LossValue adv_action_loss(ad::Graph& g, TranslationModel& model, const AdvActionBatches& b,
                          Side side) {
  require_rows(b.a2_real, "adv_action_loss");
  require_rows(b.s1, "adv_action_loss");
  require_rows(b.a1_real, "adv_action_loss");
  require_rows(b.s2, "adv_action_loss");
  ad::Tensor a2_real = g.constant(b.a2_real), s1 = g.constant(b.s1), a1 = g.constant(b.a1);
  ad::Tensor a1_real = g.constant(b.a1_real), s2 = g.constant(b.s2), a2 = g.constant(b.a2);
  LossValue out;
  const bool gen = side == Side::Generator;
  nn::MlpBinding bh1 = model.h1.bind(g, gen);
  nn::MlpBinding bh2 = model.h2.bind(g, gen);
  nn::MlpBinding bd1 = model.d_a1.bind(g, !gen);
  nn::MlpBinding bd2 = model.d_a2.bind(g, !gen);
  out.value = adv_action_core(mlp_fn2(model.h1, bh1), mlp_fn2(model.h2, bh2),
                              mlp_fn(model.d_a1, bd1), mlp_fn(model.d_a2, bd2), a2_real, s1, a1,
                              a1_real, s2, a2, side);
  if (gen) {
    out.trainables.add(model.h1, std::move(bh1));
    out.trainables.add(model.h2, std::move(bh2));
  } else {
    out.trainables.add(model.d_a1, std::move(bd1));
    out.trainables.add(model.d_a2, std::move(bd2));
  }
  return out;
}

LossValue domain_cycle_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                            const core::Mat& a1, const core::Mat& s2, const core::Mat& a2) {
  require_rows(s1, "domain_cycle_loss");
  require_rows(s2, "domain_cycle_loss");
  LossValue out;
  nn::MlpBinding bh1 = model.h1.bind(g, true);
  nn::MlpBinding bh2 = model.h2.bind(g, true);
  out.value = domain_cycle_core(mlp_fn(model.phi, model.phi.bind(g, false)),
                                mlp_fn2(model.h1, bh1), mlp_fn2(model.h2, bh2),
                                mlp_fn(model.phi_inv, model.phi_inv.bind(g, false)),
                                g.constant(s1), g.constant(a1), g.constant(s2), g.constant(a2));
  out.trainables.add(model.h1, std::move(bh1));
  out.trainables.add(model.h2, std::move(bh2));
  return out;
}

LossValue forward_model_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s,
                             const core::Mat& a, const core::Mat& s_next) {
  require_rows(s, "forward_model_loss");
  LossValue out;
  nn::MlpBinding bt2 = model.t2hat.bind(g, true);
  out.value = forward_model_core(mlp_fn2(model.t2hat, bt2), g.constant(s), g.constant(a),
                                 g.constant(s_next));
  out.trainables.add(model.t2hat, std::move(bt2));
  return out;
}

LossValue multi_step_dyn_loss(ad::Graph& g, TranslationModel& model,
                              const data::SegmentBatch& segments) {
  LossValue out;
  nn::MlpBinding bphi = model.phi.bind(g, true);
  nn::MlpBinding bh1 = model.h1.bind(g, true);
  // Parameters of the learned dynamics receive no gradient; gradients still
  // flow through it into the maps.
  out.value = multi_step_core(mlp_fn(model.phi, bphi), mlp_fn2(model.h1, bh1),
                              mlp_fn2(model.t2hat, model.t2hat.bind(g, false)),
                              to_tensors(g, segments));
  out.trainables.add(model.phi, std::move(bphi));
  out.trainables.add(model.h1, std::move(bh1));
  return out;
}

LossValue dyn_cycle_loss_1(ad::Graph& g, TranslationModel& model, const core::Mat& s,
                           const core::Mat& a, const core::Mat& s_next) {
  data::SegmentBatch seg;
  seg.states = {s, s_next};
  seg.actions = {a};
  return multi_step_dyn_loss(g, model, seg);
}

LossValue similarity_loss(ad::Graph& g, nn::SimilarityNet& net, const core::Mat& x1,
                          const core::Mat& x2, const core::Vec& labels) {
  require_rows(x1, "similarity_loss");
  for (double v : labels)
    if (v < 0.0 || v > 1.0) throw core::InputError("similarity_loss: label outside [0,1]");
  LossValue out;
  nn::SimilarityNet::Binding binding;
  ad::Tensor pred = net.forward(g, g.constant(x1), g.constant(x2), true, &binding);
  out.value = bce_core(pred, g.constant({labels.size(), 1}, labels));
  out.trainables.add(net.encoder1(), std::move(binding.enc1));
  out.trainables.add(net.encoder2(), std::move(binding.enc2));
  out.trainables.add(net.head(), std::move(binding.head));
  return out;
}

namespace {

std::vector<Fn2> sim_state_fns(ad::Graph& g, const TranslationModel& model) {
  std::vector<Fn2> out;
  for (const auto& net : model.sim_state) {
    auto binding = std::make_shared<nn::SimilarityNet::Binding>(net.bind(g, false));
    out.push_back([&net, binding](const ad::Tensor& x1, const ad::Tensor& x2) {
      return net.forward(*binding, x1, x2);
    });
  }
  return out;
}

std::vector<Fn4> sim_action_fns(ad::Graph& g, const TranslationModel& model) {
  std::vector<Fn4> out;
  for (const auto& net : model.sim_action) {
    auto binding = std::make_shared<nn::SimilarityNet::Binding>(net.bind(g, false));
    out.push_back([&net, binding](const ad::Tensor& s1, const ad::Tensor& a1, const ad::Tensor& s2,
                                  const ad::Tensor& a2) {
      return net.forward(*binding, ad::concat(s1, a1), ad::concat(s2, a2));
    });
  }
  return out;
}

}  // namespace

LossValue weak_constraint_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                               const core::Mat& sa_s, const core::Mat& sa_a) {
  if (model.sim_state.empty() && model.sim_action.empty())
    throw core::InputError("weak_constraint_loss: model has no similarity networks");
  LossValue out;
  nn::MlpBinding bphi = model.phi.bind(g, true);
  nn::MlpBinding bh1 = model.h1.bind(g, true);
  out.value = weak_core(mlp_fn(model.phi, bphi), mlp_fn2(model.h1, bh1), sim_state_fns(g, model),
                        sim_action_fns(g, model), g.constant(s1), g.constant(sa_s),
                        g.constant(sa_a));
  out.trainables.add(model.phi, std::move(bphi));
  out.trainables.add(model.h1, std::move(bh1));
  return out;
}

TotalLoss total_map_loss(ad::Graph& g, TranslationModel& model, const PhaseBatches& batches,
                         const LossWeights& weights, Phase phase) {
  weights.validate();
  TotalLoss out;
  const bool state_phase = phase == Phase::State;

  // One binding per network; gradient routing follows the phase contract.
  nn::MlpBinding bphi = model.phi.bind(g, state_phase);
  nn::MlpBinding bphi_inv = model.phi_inv.bind(g, state_phase);
  nn::MlpBinding bh1 = model.h1.bind(g, !state_phase);
  nn::MlpBinding bh2 = model.h2.bind(g, !state_phase);
  Fn1 phi = mlp_fn(model.phi, bphi);
  Fn1 phi_inv = mlp_fn(model.phi_inv, bphi_inv);
  Fn2 h1 = mlp_fn2(model.h1, bh1);
  Fn2 h2 = mlp_fn2(model.h2, bh2);
  Fn2 t2 = mlp_fn2(model.t2hat, model.t2hat.bind(g, false));

  std::vector<std::pair<double, ad::Tensor>> terms;

  if (state_phase) {
    if (weights.adv_state > 0.0) {
      require_rows(batches.adv_s1, "total_map_loss");
      ad::Tensor adv = adv_state_core(phi, mlp_fn(model.d_s, model.d_s.bind(g, false)),
                                      g.constant(batches.adv_s1), g.constant(batches.adv_s2),
                                      Side::Generator);
      out.adv_s = adv.scalar();
      terms.emplace_back(weights.adv_state, adv);
    }
    if (weights.dom > 0.0) {
      require_rows(batches.recon_s1, "total_map_loss");
      // The reconstruction context treats phi as fixed input.
      ad::Tensor rec = recon_core(mlp_fn(model.phi, model.phi.bind(g, false)), phi_inv,
                                  g.constant(batches.recon_s1));
      out.recon = rec.scalar();
      terms.emplace_back(weights.dom, rec);
    }
  } else {
    if (weights.adv_action > 0.0) {
      const auto& b = batches.adv_a;
      ad::Tensor adv = adv_action_core(h1, h2, mlp_fn(model.d_a1, model.d_a1.bind(g, false)),
                                       mlp_fn(model.d_a2, model.d_a2.bind(g, false)),
                                       g.constant(b.a2_real), g.constant(b.s1), g.constant(b.a1),
                                       g.constant(b.a1_real), g.constant(b.s2), g.constant(b.a2),
                                       Side::Generator);
      out.adv_a = adv.scalar();
      terms.emplace_back(weights.adv_action, adv);
    }
    if (weights.dom > 0.0) {
      ad::Tensor dom = domain_cycle_core(phi, h1, h2, phi_inv, g.constant(batches.dom_s1),
                                         g.constant(batches.dom_a1), g.constant(batches.dom_s2),
                                         g.constant(batches.dom_a2));
      out.dom = dom.scalar();
      terms.emplace_back(weights.dom, dom);
    }
  }

  if (weights.dyn > 0.0) {
    ad::Tensor mdyn = multi_step_core(phi, h1, t2, to_tensors(g, batches.segments));
    out.mdyn = mdyn.scalar();
    terms.emplace_back(weights.dyn, mdyn);
  }
  if (weights.weak > 0.0 && (!model.sim_state.empty() || !model.sim_action.empty())) {
    ad::Tensor wk = weak_core(phi, h1, sim_state_fns(g, model), sim_action_fns(g, model),
                              g.constant(batches.weak_s1), g.constant(batches.weak_sa_s),
                              g.constant(batches.weak_sa_a));
    out.weak = wk.scalar();
    terms.emplace_back(weights.weak, wk);
  }

  if (terms.empty()) {
    out.value = g.constant_scalar(0.0);
  } else {
    for (const auto& [w, t] : terms) {
      ad::Tensor scaled = ad::scale(t, w);
      out.value = out.value.valid() ? ad::add(out.value, scaled) : scaled;
    }
  }

  if (state_phase) {
    out.trainables.add(model.phi, std::move(bphi));
    out.trainables.add(model.phi_inv, std::move(bphi_inv));
  } else {
    out.trainables.add(model.h1, std::move(bh1));
    out.trainables.add(model.h2, std::move(bh2));
  }
  return out;
}

}  // namespace wscl::losses
