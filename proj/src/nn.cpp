#include "wscl/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace wscl::nn {

using json = nlohmann::json;

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }
std::string to_string(OutputActivation a) {
  return a == OutputActivation::Identity ? "identity" : "sigmoid";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw core::InputError("unknown activation '" + s + "'");
}

OutputActivation output_activation_from_string(const std::string& s) {
  if (s == "identity") return OutputActivation::Identity;
  if (s == "sigmoid") return OutputActivation::Sigmoid;
  throw core::InputError("unknown output activation '" + s + "'");
}

Mlp::Mlp(std::string name, std::string role, std::vector<std::size_t> layer_sizes,
         Activation hidden, OutputActivation output, std::uint64_t seed)
    : name_(std::move(name)),
      role_(std::move(role)),
      sizes_(std::move(layer_sizes)),
      hidden_(hidden),
      output_(output) {
  if (sizes_.size() < 2) throw core::InputError("Mlp '" + name_ + "': need at least 2 layer sizes");
  for (std::size_t s : sizes_)
    if (s == 0) throw core::InputError("Mlp '" + name_ + "': zero-sized layer");

  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.emplace_back(total, total + sizes_[l] * sizes_[l + 1]);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);

  core::Rng rng(core::splitmix64(seed ^ core::fnv1a(name_)));
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l], fan_out = sizes_[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    double* w = params_.data() + offsets_[l].first;
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
}

void Mlp::set_params(const core::Vec& p) {
  if (p.size() != params_.size())
    throw core::InputError("Mlp '" + name_ + "': parameter count mismatch");
  params_ = p;
}

MlpBinding Mlp::bind(ad::Graph& g, bool requires_grad) const {
  MlpBinding binding;
  binding.requires_grad = requires_grad;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l], fan_out = sizes_[l + 1];
    const auto [wo, bo] = offsets_[l];
    binding.w.push_back(g.leaf({fan_in, fan_out},
                               core::Vec(params_.begin() + wo, params_.begin() + wo + fan_in * fan_out),
                               requires_grad));
    binding.b.push_back(
        g.leaf({fan_out}, core::Vec(params_.begin() + bo, params_.begin() + bo + fan_out), requires_grad));
  }
  return binding;
}

ad::Tensor Mlp::forward(const MlpBinding& binding, const ad::Tensor& x) const {
  ad::Tensor h = x;
  const std::size_t last = binding.w.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    h = ad::add_bias(ad::matmul(h, binding.w[l]), binding.b[l]);
    if (l < last) {
      h = hidden_ == Activation::Tanh ? ad::tanh(h) : ad::relu(h);
    } else if (output_ == OutputActivation::Sigmoid) {
      h = ad::sigmoid(h);
    }
  }
  return h;
}

ad::Tensor Mlp::forward(ad::Graph& g, const ad::Tensor& x, bool requires_grad,
                        MlpBinding* out_binding) const {
  MlpBinding binding = bind(g, requires_grad);
  ad::Tensor y = forward(binding, x);
  if (out_binding != nullptr) *out_binding = std::move(binding);
  return y;
}

core::Mat Mlp::forward_value(const core::Mat& x) const {
  if (x.cols != in_dim())
    throw core::InputError("Mlp '" + name_ + "': input width " + std::to_string(x.cols) +
                           " != " + std::to_string(in_dim()));
  core::Mat h = x;
  const std::size_t last = offsets_.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const std::size_t fan_in = sizes_[l], fan_out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l].first;
    const double* b = params_.data() + offsets_[l].second;
    core::Mat out(h.rows, fan_out);
    for (std::size_t r = 0; r < h.rows; ++r) {
      double* orow = out.v.data() + r * fan_out;
      for (std::size_t j = 0; j < fan_out; ++j) orow[j] = b[j];
      const double* hrow = h.v.data() + r * fan_in;
      for (std::size_t t = 0; t < fan_in; ++t) {
        const double ht = hrow[t];
        if (ht == 0.0) continue;
        const double* wrow = w + t * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) orow[j] += ht * wrow[j];
      }
    }
    if (l < last) {
      if (hidden_ == Activation::Tanh)
        for (auto& v : out.v) v = std::tanh(v);
      else
        for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
    } else if (output_ == OutputActivation::Sigmoid) {
      for (auto& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
    }
    h = std::move(out);
  }
  return h;
}

core::Vec Mlp::forward_value(const core::Vec& x) const {
  core::Mat m(1, x.size());
  m.v = x;
  return forward_value(m).v;
}

core::Vec Mlp::gradients(const MlpBinding& binding) {
  core::Vec out;
  for (std::size_t l = 0; l < binding.w.size(); ++l) {
    core::Vec gw = binding.w[l].grad();
    core::Vec gb = binding.b[l].grad();
    out.insert(out.end(), gw.begin(), gw.end());
    out.insert(out.end(), gb.begin(), gb.end());
  }
  return out;
}

SimilarityNet::SimilarityNet(std::string name, std::string role, std::size_t in1, std::size_t in2,
                             std::size_t enc_width, std::size_t head_width, std::uint64_t seed)
    : name_(std::move(name)) {
  // Encoders map each agent's raw input into a shared hidden space; the head
  // scores the concatenated features.
  enc1_ = Mlp(name_ + ".enc1", role, {in1, enc_width, enc_width, enc_width}, Activation::Tanh,
              OutputActivation::Identity, core::splitmix64(seed ^ 0xe1));
  enc2_ = Mlp(name_ + ".enc2", role, {in2, enc_width, enc_width, enc_width}, Activation::Tanh,
              OutputActivation::Identity, core::splitmix64(seed ^ 0xe2));
  head_ = Mlp(name_ + ".head", role, {2 * enc_width, head_width, 1}, Activation::Tanh,
              OutputActivation::Sigmoid, core::splitmix64(seed ^ 0xcafe));
}

SimilarityNet::SimilarityNet(Mlp enc1, Mlp enc2, Mlp head)
    : enc1_(std::move(enc1)), enc2_(std::move(enc2)), head_(std::move(head)) {
  name_ = enc1_.name().substr(0, enc1_.name().rfind(".enc1"));
  if (enc1_.out_dim() != enc2_.out_dim())
    throw core::InputError("SimilarityNet '" + name_ + "': encoder widths differ");
  if (head_.in_dim() != 2 * enc1_.out_dim())
    throw core::InputError("SimilarityNet '" + name_ + "': head input width mismatch");
}

SimilarityNet::Binding SimilarityNet::bind(ad::Graph& g, bool requires_grad) const {
  return Binding{enc1_.bind(g, requires_grad), enc2_.bind(g, requires_grad),
                 head_.bind(g, requires_grad)};
}

ad::Tensor SimilarityNet::forward(const Binding& binding, const ad::Tensor& x1,
                                  const ad::Tensor& x2) const {
  ad::Tensor h1 = enc1_.forward(binding.enc1, x1);
  ad::Tensor h2 = enc2_.forward(binding.enc2, x2);
  return head_.forward(binding.head, ad::concat(h1, h2));
}

ad::Tensor SimilarityNet::forward(ad::Graph& g, const ad::Tensor& x1, const ad::Tensor& x2,
                                  bool requires_grad, Binding* out_binding) const {
  Binding binding = bind(g, requires_grad);
  ad::Tensor y = forward(binding, x1, x2);
  if (out_binding != nullptr) *out_binding = std::move(binding);
  return y;
}

double SimilarityNet::forward_value(const core::Vec& x1, const core::Vec& x2) const {
  core::Vec h1 = enc1_.forward_value(x1);
  core::Vec h2 = enc2_.forward_value(x2);
  h1.insert(h1.end(), h2.begin(), h2.end());
  return head_.forward_value(h1)[0];
}

core::Vec SimilarityNet::params() const {
  core::Vec out = enc1_.params();
  out.insert(out.end(), enc2_.params().begin(), enc2_.params().end());
  out.insert(out.end(), head_.params().begin(), head_.params().end());
  return out;
}

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

bool Adam::step(core::Vec& params, const core::Vec& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw core::InputError("Adam::step: size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) {
      ++skipped_;
      core::log_info("adam: non-finite gradient, step skipped");
      return false;
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'W', 'S', 'C', 'L'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw core::InputError("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw core::InputError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::vector<const Mlp*>& nets, const std::string& path,
                     const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = "wscl-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["phase"] = meta.phase;
  manifest["config_hash"] = meta.config_hash;
  manifest["pair_signature"] = meta.pair_signature;
  json arr = json::array();
  std::uint64_t offset = 0;
  for (const Mlp* net : nets) {
    json e;
    e["name"] = net->name();
    e["role"] = net->role();
    e["layers"] = net->layer_sizes();
    e["hidden"] = to_string(net->hidden_activation());
    e["output"] = to_string(net->output_activation());
    e["offset"] = offset;
    e["count"] = net->param_count();
    offset += net->param_count();
    arr.push_back(e);
  }
  manifest["networks"] = arr;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw core::InputError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Mlp* net : nets) {
    os.write(reinterpret_cast<const char*>(net->params().data()),
             static_cast<std::streamsize>(net->params().size() * sizeof(double)));
  }
  if (!os) throw core::InputError("checkpoint: write failed for '" + path + "'");
}

const Mlp* LoadedCheckpoint::find(const std::string& name) const {
  for (const auto& n : nets)
    if (n.name() == name) return &n;
  return nullptr;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw core::InputError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw core::InputError("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw core::InputError("checkpoint: version " + std::to_string(version) + " unsupported (want " +
                           std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t mlen = read_u64(is);
  std::string text(mlen, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(mlen)))
    throw core::InputError("checkpoint: truncated manifest");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw core::InputError(std::string("checkpoint: manifest parse error: ") + e.what());
  }

  LoadedCheckpoint out;
  out.meta.phase = manifest.value("phase", "");
  out.meta.config_hash = manifest.value("config_hash", "");
  out.meta.pair_signature = manifest.value("pair_signature", "");

  for (const auto& e : manifest.at("networks")) {
    Mlp net;
    net.name_ = e.at("name").get<std::string>();
    net.role_ = e.at("role").get<std::string>();
    net.sizes_ = e.at("layers").get<std::vector<std::size_t>>();
    net.hidden_ = activation_from_string(e.at("hidden").get<std::string>());
    net.output_ = output_activation_from_string(e.at("output").get<std::string>());
    if (net.sizes_.size() < 2) throw core::InputError("checkpoint: bad layer list for " + net.name_);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
      net.offsets_.emplace_back(total, total + net.sizes_[l] * net.sizes_[l + 1]);
      total += net.sizes_[l] * net.sizes_[l + 1] + net.sizes_[l + 1];
    }
    const std::size_t declared = e.at("count").get<std::size_t>();
    if (declared != total)
      throw core::InputError("checkpoint: parameter count for '" + net.name_ + "' (" +
                             std::to_string(declared) + ") does not match layer sizes (" +
                             std::to_string(total) + ")");
    net.params_.resize(total);
    if (!is.read(reinterpret_cast<char*>(net.params_.data()),
                 static_cast<std::streamsize>(total * sizeof(double))))
      throw core::InputError("checkpoint: truncated payload at '" + net.name_ + "'");
    out.nets.push_back(std::move(net));
  }
  // Trailing bytes mean the manifest and payload disagree.
  char probe;
  if (is.read(&probe, 1)) throw core::InputError("checkpoint: trailing bytes after payload");
  return out;
}

}  // namespace wscl::nn
