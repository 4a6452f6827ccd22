#include "daf/model/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "daf/numerics/random.hpp"

namespace daf::model {

const char* to_string(SharingStrategy s) {
  switch (s) {
    case SharingStrategy::full: return "full";
    case SharingStrategy::no_q_share: return "no-q-share";
    case SharingStrategy::no_k_share: return "no-k-share";
    case SharingStrategy::v_share: return "v-share";
    case SharingStrategy::attf: return "attf";
  }
  return "full";
}

SharingStrategy parse_strategy(const std::string& text) {
  if (text == "full" || text == "daf") return SharingStrategy::full;
  if (text == "no-q-share") return SharingStrategy::no_q_share;
  if (text == "no-k-share") return SharingStrategy::no_k_share;
  if (text == "v-share") return SharingStrategy::v_share;
  if (text == "attf") return SharingStrategy::attf;
  throw ConfigError("unknown sharing strategy '" + text + "' (expected full, no-q-share, no-k-share, v-share or attf)");
}

Index ModelConfig::max_kernel() const {
  if (kernel_sizes.empty()) throw ConfigError("at least one kernel size is required");
  return *std::max_element(kernel_sizes.begin(), kernel_sizes.end());
}

Index ModelConfig::half_width() const { return (max_kernel() - 1 + 1) / 2; }

void ModelConfig::validate() const {
  if (hidden < 1) throw ConfigError("hidden dimension must be positive");
  if (mlp_layers < 1) throw ConfigError("mlp_layers must be at least 1");
  if (covariate_dim < 0) throw ConfigError("covariate_dim must be non-negative");
  if (kernel_sizes.empty()) throw ConfigError("at least one kernel size is required");
  for (Index s : kernel_sizes) {
    if (s < 1 || s % 2 == 0) throw ConfigError("kernel sizes must be odd, got " + std::to_string(s));
  }
  const auto m = static_cast<Index>(kernel_sizes.size());
  if (hidden % m != 0) {
    throw ConfigError("hidden dimension " + std::to_string(hidden) + " is not divisible by the " + std::to_string(m) +
                      " pattern convolutions");
  }
}

namespace {

enum class Part { value, pattern, query, key, decoder };

std::string scope_of(Part part, const ModelConfig& cfg, Domain domain) {
  const std::string own = data::to_string(domain);
  switch (part) {
    case Part::value: return cfg.strategy == SharingStrategy::v_share ? "shared" : own;
    case Part::query: return cfg.strategy == SharingStrategy::no_q_share ? own : "shared";
    case Part::key: return cfg.strategy == SharingStrategy::no_k_share ? own : "shared";
    case Part::pattern:
    case Part::decoder: return own;
  }
  return own;
}

struct MlpDims {
  Index in;
  Index hidden;
  Index out;
  Index layers;
};

std::vector<std::pair<Index, Index>> layer_shapes(const MlpDims& d) {
  std::vector<std::pair<Index, Index>> shapes;  // (out, in)
  Index in = d.in;
  for (Index i = 0; i < d.layers; ++i) {
    const Index out = i + 1 == d.layers ? d.out : d.hidden;
    shapes.emplace_back(out, in);
    in = out;
  }
  return shapes;
}

Index mlp_size(const MlpDims& d) {
  Index n = 0;
  for (auto [out, in] : layer_shapes(d)) n += out * in + out;
  return n;
}

MlpDims value_dims(const ModelConfig& c) { return {c.input_dim(), c.hidden, c.hidden, c.mlp_layers}; }
MlpDims output_dims(const ModelConfig& c) { return {c.hidden, c.hidden, c.hidden, c.mlp_layers}; }
MlpDims decoder_dims(const ModelConfig& c) { return {c.hidden, c.hidden, 1, c.mlp_layers}; }
MlpDims disc_dims(const ModelConfig& c) { return {c.qk_dim(), c.qk_dim(), 1, 2}; }

class Builder {
 public:
  Builder(ParamStore& store) : store_(store) {}

  void mlp(const std::string& prefix, const MlpDims& dims) {
    const auto shapes = layer_shapes(dims);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      affine(prefix + "." + std::to_string(i), shapes[i].first, shapes[i].second);
    }
  }

  void affine(const std::string& prefix, Index out, Index in) {
    if (store_.contains(prefix + ".weight")) return;
    store_.add(prefix + ".weight", {out, in});
    store_.add(prefix + ".bias", {out});
  }

  void conv(const std::string& prefix, Index out, Index in, Index size) {
    if (store_.contains(prefix + ".kernel")) return;
    store_.add(prefix + ".kernel", {out, in, size});
    store_.add(prefix + ".bias", {out});
  }

 private:
  ParamStore& store_;
};

void glorot_init(ParamStore& store, std::uint64_t seed) {
  auto rng = num::make_rng(seed, "init");
  for (auto* p : store.parameters()) {
    const auto& shape = p->value.shape();
    if (p->name.ends_with(".bias")) {
      p->value.set_zero();
      continue;
    }
    // Receptive field size multiplies both fans for convolution kernels.
    const Index receptive = shape.size() == 3 ? shape[2] : 1;
    const double fan_out = static_cast<double>(shape[0] * receptive);
    const double fan_in = static_cast<double>(shape[1] * receptive);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    auto& m = p->value.matrix();
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng);
    }
  }
}

}  // namespace

ParamStore build_models(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore store;
  Builder b(store);
  const Index h = config.hidden;
  const Index d = config.qk_dim();
  const auto m = static_cast<Index>(config.kernel_sizes.size());

  std::vector<Domain> domains;
  if (config.has_source()) domains.push_back(Domain::source);
  domains.push_back(Domain::target);

  for (Domain dom : domains) {
    b.mlp(scope_of(Part::value, config, dom) + ".value", value_dims(config));
    for (std::size_t j = 0; j < config.kernel_sizes.size(); ++j) {
      b.conv(scope_of(Part::pattern, config, dom) + ".pattern." + std::to_string(j), h / m, config.input_dim(),
             config.kernel_sizes[j]);
    }
    b.mlp(scope_of(Part::decoder, config, dom) + ".decoder", decoder_dims(config));
  }
  for (Domain dom : domains) {
    for (Index i = 0; i + 1 < config.mlp_layers; ++i) b.affine("shared.qk." + std::to_string(i), h, h);
    b.affine(scope_of(Part::query, config, dom) + ".query", d, h);
    b.affine(scope_of(Part::key, config, dom) + ".key", d, h);
  }
  b.mlp("shared.output", output_dims(config));
  if (config.has_discriminator()) b.mlp("disc", disc_dims(config));

  glorot_init(store, seed);
  return store;
}

namespace {

std::vector<AffineRef> mlp_refs(ParamStore& store, const std::string& prefix, Index layers) {
  std::vector<AffineRef> out;
  for (Index i = 0; i < layers; ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    out.push_back({&store.at(p + ".weight"), &store.at(p + ".bias")});
  }
  return out;
}

AffineRef affine_ref(ParamStore& store, const std::string& prefix) {
  return {&store.at(prefix + ".weight"), &store.at(prefix + ".bias")};
}

}  // namespace

GeneratorRefs generator_refs(ParamStore& store, const ModelConfig& config, Domain domain) {
  if (domain == Domain::source && !config.has_source()) {
    throw ConfigError(std::string("strategy ") + to_string(config.strategy) + " has no source generator");
  }
  GeneratorRefs r;
  r.value = mlp_refs(store, scope_of(Part::value, config, domain) + ".value", config.mlp_layers);
  for (std::size_t j = 0; j < config.kernel_sizes.size(); ++j) {
    const std::string p = scope_of(Part::pattern, config, domain) + ".pattern." + std::to_string(j);
    r.pattern.push_back({&store.at(p + ".kernel"), &store.at(p + ".bias"), config.kernel_sizes[j]});
  }
  r.qk_trunk = mlp_refs(store, "shared.qk", config.mlp_layers - 1);
  r.query = affine_ref(store, scope_of(Part::query, config, domain) + ".query");
  r.key = affine_ref(store, scope_of(Part::key, config, domain) + ".key");
  r.output = mlp_refs(store, "shared.output", config.mlp_layers);
  r.decoder = mlp_refs(store, scope_of(Part::decoder, config, domain) + ".decoder", config.mlp_layers);
  return r;
}

DiscriminatorRefs discriminator_refs(ParamStore& store, const ModelConfig& config) {
  if (!config.has_discriminator()) throw ConfigError("strategy attf has no discriminator");
  return {mlp_refs(store, "disc", 2)};
}

std::vector<std::string> generator_prefixes(const ModelConfig& config) {
  std::vector<std::string> out{"shared.", "target."};
  if (config.has_source()) out.emplace_back("source.");
  return out;
}

std::vector<std::string> discriminator_prefixes() { return {"disc."}; }

ParameterBudget parameter_budget(const ModelConfig& config) {
  config.validate();
  ParameterBudget b;
  const Index h = config.hidden;
  const Index d = config.qk_dim();
  const auto m = static_cast<Index>(config.kernel_sizes.size());
  b.encoder = mlp_size(value_dims(config));
  for (Index s : config.kernel_sizes) b.encoder += (h / m) * config.input_dim() * s + h / m;
  b.decoder = mlp_size(decoder_dims(config));
  b.attention = (config.mlp_layers - 1) * (h * h + h) + 2 * (d * h + d) + mlp_size(output_dims(config));
  b.discriminator = config.has_discriminator() ? mlp_size(disc_dims(config)) : 0;
  return b;
}

namespace {

num::AffineLayer bind_affine(num::Tape& tape, const AffineRef& r) {
  return {tape.parameter(*r.weight), tape.parameter(*r.bias)};
}

std::vector<num::AffineLayer> bind_all(num::Tape& tape, const std::vector<AffineRef>& refs) {
  std::vector<num::AffineLayer> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(bind_affine(tape, r));
  return out;
}

}  // namespace

GeneratorVars bind(num::Tape& tape, const GeneratorRefs& refs) {
  GeneratorVars v;
  v.value = bind_all(tape, refs.value);
  for (const auto& c : refs.pattern) v.pattern.push_back({tape.parameter(*c.kernel), tape.parameter(*c.bias), c.size});
  v.qk_trunk = bind_all(tape, refs.qk_trunk);
  v.query = bind_affine(tape, refs.query);
  v.key = bind_affine(tape, refs.key);
  v.output = bind_all(tape, refs.output);
  v.decoder = bind_all(tape, refs.decoder);
  return v;
}

std::vector<num::AffineLayer> bind(num::Tape& tape, const DiscriminatorRefs& refs) {
  return bind_all(tape, refs.layers);
}

DafModel::DafModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(build_models(config_, seed)) {}

DafModel::DafModel(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const ParamStore expected = build_models(config_, 0);
  if (expected.names() != params_.names()) {
    throw StateMismatchError(std::string("parameters do not match a ") + to_string(config_.strategy) + " model");
  }
  for (const auto* p : expected.parameters()) {
    if (p->value.shape() != params_.at(p->name).value.shape()) {
      throw StateMismatchError("parameter '" + p->name + "' has shape " +
                               num::shape_string(params_.at(p->name).value.shape()) + ", expected " +
                               num::shape_string(p->value.shape()));
    }
  }
}

}  // namespace daf::model
