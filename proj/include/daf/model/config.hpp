#pragma once

#include <string>
#include <vector>

#include "daf/numerics/array.hpp"

namespace daf::model {

using num::Index;

/// Which parts of the attention module the two generators share.
///  - full: queries, keys and the output MLP shared; encoders/decoders private
///  - no_q_share / no_k_share: the query (key) head is private per domain
///  - v_share: the value MLP is shared as well
///  - attf: single-domain model, target branch only, no discriminator
enum class SharingStrategy { full, no_q_share, no_k_share, v_share, attf };

const char* to_string(SharingStrategy s);
SharingStrategy parse_strategy(const std::string& text);

struct ModelConfig {
  Index hidden = 64;
  // Affine layers per MLP (value, query/key, output, decoder); ReLU between layers.
  Index mlp_layers = 1;
  std::vector<Index> kernel_sizes{3, 5};
  Index covariate_dim = 2;
  SharingStrategy strategy = SharingStrategy::full;
  // Feed forecast-region queries/keys (t = T+1..T+tau) to the discriminator.
  bool disc_forecast_region = true;

  Index input_dim() const { return 1 + covariate_dim; }
  Index qk_dim() const { return hidden; }
  Index max_kernel() const;
  // ceil((s-1)/2) of the largest kernel.
  Index half_width() const;
  // Shortest history for which extrapolation has a non-empty neighborhood.
  Index min_history() const { return max_kernel() + half_width() + 1; }
  bool has_source() const { return strategy != SharingStrategy::attf; }
  bool has_discriminator() const { return strategy != SharingStrategy::attf; }

  void validate() const;
};

}  // namespace daf::model
