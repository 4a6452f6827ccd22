#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daf/data/dataset.hpp"
#include "daf/model/config.hpp"
#include "daf/numerics/ops.hpp"
#include "daf/numerics/param_store.hpp"

namespace daf::model {

using data::Domain;
using num::Parameter;
using num::ParamStore;

struct AffineRef {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
};

struct ConvRef {
  Parameter* kernel = nullptr;
  Parameter* bias = nullptr;
  Index size = 0;
};

/// Parameters one domain's generator reads. Shared entries point at the same
/// Parameter from both domains' views.
struct GeneratorRefs {
  std::vector<AffineRef> value;
  std::vector<ConvRef> pattern;
  // Hidden layers of the query/key MLP, followed by the two heads.
  std::vector<AffineRef> qk_trunk;
  AffineRef query;
  AffineRef key;
  std::vector<AffineRef> output;
  std::vector<AffineRef> decoder;
};

struct DiscriminatorRefs {
  std::vector<AffineRef> layers;
};

/// Creates every parameter of the configured strategy, Glorot-uniform weights
/// and zero biases, drawn in insertion order from one stream seeded by `seed`.
ParamStore build_models(const ModelConfig& config, std::uint64_t seed);

GeneratorRefs generator_refs(ParamStore& store, const ModelConfig& config, Domain domain);
DiscriminatorRefs discriminator_refs(ParamStore& store, const ModelConfig& config);

// Parameter name prefixes trained by the generator and discriminator optimizers.
std::vector<std::string> generator_prefixes(const ModelConfig& config);
std::vector<std::string> discriminator_prefixes();

/// Expected scalar count of one encoder, decoder, the shared attention block
/// and the discriminator, computed from the dimensions alone.
struct ParameterBudget {
  Index encoder = 0;
  Index decoder = 0;
  Index attention = 0;
  Index discriminator = 0;
};
ParameterBudget parameter_budget(const ModelConfig& config);

/// Per-tape bindings of GeneratorRefs.
struct ConvVars {
  num::Var kernel;
  num::Var bias;
  Index size = 0;
};

struct GeneratorVars {
  std::vector<num::AffineLayer> value;
  std::vector<ConvVars> pattern;
  std::vector<num::AffineLayer> qk_trunk;
  num::AffineLayer query;
  num::AffineLayer key;
  std::vector<num::AffineLayer> output;
  std::vector<num::AffineLayer> decoder;
};

GeneratorVars bind(num::Tape& tape, const GeneratorRefs& refs);
std::vector<num::AffineLayer> bind(num::Tape& tape, const DiscriminatorRefs& refs);

/// A configured model and its parameters.
class DafModel {
 public:
  DafModel(ModelConfig config, std::uint64_t seed);
  DafModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  GeneratorRefs generator(Domain domain) { return generator_refs(params_, config_, domain); }
  DiscriminatorRefs discriminator() { return discriminator_refs(params_, config_); }

  std::vector<Parameter*> generator_parameters() { return params_.select(generator_prefixes(config_)); }
  std::vector<Parameter*> discriminator_parameters() { return params_.select(discriminator_prefixes()); }

 private:
  ModelConfig config_;
  ParamStore params_;
};

}  // namespace daf::model
