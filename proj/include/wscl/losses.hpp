#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wscl/autodiff.hpp"
#include "wscl/core.hpp"
#include "wscl/datasets.hpp"
#include "wscl/envs.hpp"
#include "wscl/nn.hpp"

namespace wscl::losses {

/// Trade-off weights and the dynamics-consistency horizon.
struct LossWeights {
  double dyn = 10.0;        // multi-step dynamics cycle-consistency
  double dom = 10.0;        // domain cycle-consistency (and inverse-map reconstruction)
  double adv_action = 1.0;  // action adversarial
  double adv_state = 1.0;   // state adversarial
  double weak = 5.0;        // weak similarity constraints
  std::size_t horizon = 5;  // T

  void validate() const;
};

struct ModelDims {
  std::size_t map_width = 64;
  std::size_t map_depth = 2;  // hidden layers in maps and forward model
  std::size_t disc_width = 32;
  std::size_t disc_depth = 2;
  std::size_t sim_enc_width = 32;
  std::size_t sim_head_width = 32;
};

/// The full network set: maps, inverse-context map, discriminators, learned
/// forward model, and the frozen similarity scorers.
struct TranslationModel {
  nn::Mlp phi;       // state map S1 -> S2
  nn::Mlp h1;        // action map (S1,A1) -> A2
  nn::Mlp h2;        // action map (S2,A2) -> A1
  nn::Mlp phi_inv;   // inverse context map S2 -> S1
  nn::Mlp d_s;       // state discriminator
  nn::Mlp d_a1;      // action discriminator over A1
  nn::Mlp d_a2;      // action discriminator over A2
  nn::Mlp t2hat;     // learned forward model (S2,A2) -> S2
  std::vector<nn::SimilarityNet> sim_state;
  std::vector<nn::SimilarityNet> sim_action;

  static TranslationModel create(const envs::MdpPair& pair, const ModelDims& dims,
                                 std::uint64_t seed);

  std::vector<const nn::Mlp*> phase1_nets() const;
  std::vector<const nn::Mlp*> map_nets() const;
  std::vector<const nn::Mlp*> all_nets() const;
  /// Replace networks by checkpointed ones matched by name. Missing names are
  /// left untouched; dimension mismatches are rejected.
  void adopt(const nn::LoadedCheckpoint& ckpt);
};

enum class Side { Generator, Discriminator };
enum class Phase { State, Action };

// ---------------------------------------------------------------------------
// Expression-level cores. These operate on callables that build tensor
// expressions, so closed-form reference maps can stand in for networks.
// ---------------------------------------------------------------------------

using Fn1 = std::function<ad::Tensor(const ad::Tensor&)>;
using Fn2 = std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&)>;
using Fn4 = std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&, const ad::Tensor&,
                                     const ad::Tensor&)>;

struct SegmentTensors {
  std::vector<ad::Tensor> states;   // T+1
  std::vector<ad::Tensor> actions;  // T
};
SegmentTensors to_tensors(ad::Graph& g, const data::SegmentBatch& batch);

/// Least-squares adversarial objective for the state map.
ad::Tensor adv_state_core(const Fn1& phi, const Fn1& d_s, const ad::Tensor& s1,
                          const ad::Tensor& s2, Side side);
ad::Tensor adv_action_core(const Fn2& h1, const Fn2& h2, const Fn1& d_a1, const Fn1& d_a2,
                           const ad::Tensor& a2_real, const ad::Tensor& s1, const ad::Tensor& a1,
                           const ad::Tensor& a1_real, const ad::Tensor& s2, const ad::Tensor& a2,
                           Side side);
ad::Tensor domain_cycle_core(const Fn1& phi, const Fn2& h1, const Fn2& h2, const Fn1& phi_inv,
                             const ad::Tensor& s1, const ad::Tensor& a1, const ad::Tensor& s2,
                             const ad::Tensor& a2);
/// Inverse-context reconstruction: mean L1 of phi_inv(phi(s1)) - s1.
ad::Tensor recon_core(const Fn1& phi, const Fn1& phi_inv, const ad::Tensor& s1);
ad::Tensor forward_model_core(const Fn2& t2, const ad::Tensor& s, const ad::Tensor& a,
                              const ad::Tensor& s_next);
/// Rolls t2 forward feeding translated actions; per-step residuals accumulate.
ad::Tensor multi_step_core(const Fn1& phi, const Fn2& h1, const Fn2& t2,
                           const SegmentTensors& seg);
/// Binary cross entropy with predictions clamped to [1e-7, 1-1e-7].
ad::Tensor bce_core(const ad::Tensor& pred, const ad::Tensor& labels);
ad::Tensor weak_core(const Fn1& phi, const Fn2& h1, const std::vector<Fn2>& sim_s,
                     const std::vector<Fn4>& sim_a, const ad::Tensor& s1, const ad::Tensor& sa_s,
                     const ad::Tensor& sa_a);

// Expression builders for closed-form maps (row-vector convention y = x A).
Fn1 linear_fn(ad::Graph& g, const core::Mat& a);
/// (s, a) -> a A; state-independent action map.
Fn2 action_linear_fn(ad::Graph& g, const core::Mat& a);
/// (s, a) -> s + dt * a * gain; the integrator pairs' exact dynamics.
Fn2 integrator_fn(ad::Graph& g, const core::Mat& gain, double dt = 0.1);
Fn1 mlp_fn(const nn::Mlp& net, const nn::MlpBinding& binding);
Fn2 mlp_fn2(const nn::Mlp& net, const nn::MlpBinding& binding);

// ---------------------------------------------------------------------------
// Model-level operations; bindings carry the gradient routing.
// ---------------------------------------------------------------------------

struct Trainables {
  std::vector<std::pair<nn::Mlp*, nn::MlpBinding>> nets;
  void add(nn::Mlp& net, nn::MlpBinding binding);
};

struct LossValue {
  ad::Tensor value;
  Trainables trainables;
};

struct AdvActionBatches {
  core::Mat a2_real;
  core::Mat s1, a1;  // fakes via H1
  core::Mat a1_real;
  core::Mat s2, a2;  // fakes via H2
};

LossValue adv_state_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                         const core::Mat& s2, Side side);
LossValue adv_action_loss(ad::Graph& g, TranslationModel& model, const AdvActionBatches& batches,
                          Side side);
LossValue domain_cycle_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                            const core::Mat& a1, const core::Mat& s2, const core::Mat& a2);
LossValue forward_model_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s,
                             const core::Mat& a, const core::Mat& s_next);
LossValue dyn_cycle_loss_1(ad::Graph& g, TranslationModel& model, const core::Mat& s,
                           const core::Mat& a, const core::Mat& s_next);
LossValue multi_step_dyn_loss(ad::Graph& g, TranslationModel& model,
                              const data::SegmentBatch& segments);
LossValue similarity_loss(ad::Graph& g, nn::SimilarityNet& net, const core::Mat& x1,
                          const core::Mat& x2, const core::Vec& labels);
LossValue weak_constraint_loss(ad::Graph& g, TranslationModel& model, const core::Mat& s1,
                               const core::Mat& sa_s, const core::Mat& sa_a);

struct PhaseBatches {
  core::Mat adv_s1, adv_s2;       // state adversarial
  AdvActionBatches adv_a;         // action adversarial
  core::Mat dom_s1, dom_a1, dom_s2, dom_a2;
  data::SegmentBatch segments;    // multi-step dynamics
  core::Mat weak_s1;              // states for the weak state term
  core::Mat weak_sa_s, weak_sa_a; // state-action pair for the weak action term
  core::Mat recon_s1;             // inverse-map reconstruction (state phase)
};

struct TotalLoss {
  ad::Tensor value;
  double adv_s = 0.0, adv_a = 0.0, dom = 0.0, mdyn = 0.0, weak = 0.0, recon = 0.0;
  Trainables trainables;
};

/// Phase-split total objective. The frozen side contributes values but no
/// parameter gradients; the forward model and similarity nets are always
/// frozen here.
TotalLoss total_map_loss(ad::Graph& g, TranslationModel& model, const PhaseBatches& batches,
                         const LossWeights& weights, Phase phase);

}  // namespace wscl::losses
