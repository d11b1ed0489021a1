#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wscl/autodiff.hpp"
#include "wscl/core.hpp"

namespace wscl::nn {

enum class Activation { Tanh, Relu };
enum class OutputActivation { Identity, Sigmoid };

std::string to_string(Activation a);
std::string to_string(OutputActivation a);
Activation activation_from_string(const std::string& s);
OutputActivation output_activation_from_string(const std::string& s);

/// Parameter tensors of one Mlp bound onto a graph for a single step.
/// Gradient routing is fixed at bind time: a no-grad binding contributes
/// values but its parameters never receive gradients.
struct MlpBinding {
  std::vector<ad::Tensor> w;  // weight matrices [fan_in x fan_out]
  std::vector<ad::Tensor> b;  // bias vectors [fan_out]
  bool requires_grad = false;
};

class Mlp {
 public:
  Mlp() = default;
  /// Glorot-uniform weights, zero biases; identical seed gives bit-identical
  /// parameters.
  Mlp(std::string name, std::string role, std::vector<std::size_t> layer_sizes, Activation hidden,
      OutputActivation output, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const std::string& role() const { return role_; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  OutputActivation output_activation() const { return output_; }
  std::size_t in_dim() const { return sizes_.front(); }
  std::size_t out_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }

  /// Flat parameter vector, layer-major (w0, b0, w1, b1, ...).
  const core::Vec& params() const { return params_; }
  core::Vec& params() { return params_; }
  void set_params(const core::Vec& p);

  MlpBinding bind(ad::Graph& g, bool requires_grad) const;
  ad::Tensor forward(const MlpBinding& binding, const ad::Tensor& x) const;
  /// Bind-and-forward; `out_binding` receives the binding when non-null.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x, bool requires_grad,
                     MlpBinding* out_binding = nullptr) const;

  /// Graph-free inference.
  core::Vec forward_value(const core::Vec& x) const;
  core::Mat forward_value(const core::Mat& x) const;

  /// Gradients of a grad-enabled binding, flattened in params() order.
  static core::Vec gradients(const MlpBinding& binding);

 private:
  std::string name_;
  std::string role_;
  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::Tanh;
  OutputActivation output_ = OutputActivation::Identity;
  core::Vec params_;
  // offsets into params_: per layer (w_offset, b_offset)
  std::vector<std::pair<std::size_t, std::size_t>> offsets_;

  friend struct LoadedCheckpoint load_checkpoint(const std::string& path);
};

/// Twin-encoder similarity network: each side's input is mapped by its own
/// encoder into a shared hidden space; the concatenated features go through
/// a sigmoid-headed scorer in (0,1).
class SimilarityNet {
 public:
  SimilarityNet() = default;
  SimilarityNet(std::string name, std::string role, std::size_t in1, std::size_t in2,
                std::size_t enc_width, std::size_t head_width, std::uint64_t seed);
  /// Reassemble from checkpoint parts.
  SimilarityNet(Mlp enc1, Mlp enc2, Mlp head);

  const std::string& name() const { return name_; }
  const std::string& role() const { return enc1_.role(); }
  const Mlp& encoder1() const { return enc1_; }
  const Mlp& encoder2() const { return enc2_; }
  const Mlp& head() const { return head_; }
  Mlp& encoder1() { return enc1_; }
  Mlp& encoder2() { return enc2_; }
  Mlp& head() { return head_; }

  struct Binding {
    MlpBinding enc1, enc2, head;
  };
  Binding bind(ad::Graph& g, bool requires_grad) const;
  ad::Tensor forward(const Binding& binding, const ad::Tensor& x1, const ad::Tensor& x2) const;
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x1, const ad::Tensor& x2, bool requires_grad,
                     Binding* out_binding = nullptr) const;
  double forward_value(const core::Vec& x1, const core::Vec& x2) const;

  core::Vec params() const;

 private:
  std::string name_;
  Mlp enc1_, enc2_, head_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector. A non-finite gradient
/// skips the whole step for that network and logs the event.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg);

  /// Returns false when the step was skipped (non-finite gradient).
  bool step(core::Vec& params, const core::Vec& grads);

  std::size_t t() const { return t_; }
  std::size_t skipped() const { return skipped_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  core::Vec m_, v_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint file: magic "WSCL", u32 version, u64 manifest length, UTF-8 JSON
// manifest, then one flat little-endian f64 block per network, layer-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string phase;           // "phase1" | "phase2" | free-form
  std::string config_hash;     // provenance
  std::string pair_signature;  // pair identity (name, params, dims)
};

void save_checkpoint(const std::vector<const Mlp*>& nets, const std::string& path,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::vector<Mlp> nets;
  CheckpointMeta meta;
  const Mlp* find(const std::string& name) const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace wscl::nn
