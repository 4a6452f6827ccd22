#pragma once

#include <optional>
#include <span>
#include <vector>

#include "daf/data/dataset.hpp"
#include "daf/model/attention.hpp"
#include "daf/model/params.hpp"

namespace daf::model {

/// Scaled windows of one domain packed side by side, one position per column.
struct GeneratorBatch {
  Index batch = 0;
  Index history = 0;
  Index horizon = 0;
  // (1 + d_xi) x (B*T): row 0 is the scaled series, the rest covariates.
  Matrix inputs;
  // d_xi x (B*tau)
  Matrix future_covariates;
  // 1 x (B*T) and 1 x (B*tau), scaled.
  Matrix history_targets;
  Matrix future_targets;
  std::vector<data::Scale> scales;
  std::vector<std::int64_t> series_ids;
};

/// Packs already-scaled windows; all must share T, tau and covariate rows.
GeneratorBatch make_batch(std::span<const data::SeriesWindow> windows);
GeneratorBatch make_batch(std::span<const data::SeriesWindow* const> windows);

struct Encoded {
  Var patterns;  // h x (B*L)
  Var values;    // h x (B*L)
};

/// Value embedding from the position-wise MLP and the multi-scale pattern
/// embedding from the concatenated same-padded convolutions.
Encoded encode(Var inputs, Index segment_length, const GeneratorVars& g);

struct QueryKey {
  Var queries;
  Var keys;
};

QueryKey project_qk(Var patterns, const GeneratorVars& g);

/// Everything the attention module produced for one window, positions 1..T+tau.
struct AttentionRow {
  Index position = 0;
  std::vector<Index> neighbors;
  std::vector<Index> value_positions;
  Vector weights;
};

struct AttentionTrace {
  std::int64_t series_id = 0;
  Matrix queries;  // d x (T+tau)
  Matrix keys;     // d x (T+tau)
  Matrix values;   // h x (T+tau)
  Matrix outputs;  // h x (T+tau)
  std::vector<AttentionRow> rows;
};

struct GeneratorOutput {
  Var reconstruction;  // 1 x (B*T)
  Var forecast;        // 1 x (B*tau)
  // Queries and keys at positions 1..T from the history encoding, and at
  // T+1..T+tau from the encoding of the history followed by the forecast.
  QueryKey history_qk;
  std::optional<QueryKey> forecast_qk;
  std::vector<AttentionTrace> traces;
};

struct ForwardOptions {
  // Skip history reconstruction; `reconstruction` is then left invalid.
  bool reconstruct = true;
  bool forecast_qk = true;
  bool record_trace = false;
};

/// Reconstructs the history by interpolation, then forecasts tau steps by
/// recursive extrapolation, feeding each prediction back as the next input.
///
/// After a prediction is appended only the embedding columns whose
/// convolution windows now see it change; those are computed as they become
/// available, which equals re-encoding the extended sequence at every step.
GeneratorOutput generator_forward(num::Tape& tape, const GeneratorBatch& batch, const GeneratorVars& g,
                                  const ModelConfig& config, const ForwardOptions& options = {});

/// Probability that each column of `latent` (d x n) comes from the source domain.
Var discriminate(Var latent, std::span<const num::AffineLayer> disc);

/// Concatenation of the latent set fed to the discriminator.
Var latent_set(const GeneratorOutput& out, bool include_forecast_region);

}  // namespace daf::model
