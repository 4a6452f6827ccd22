#include "daf/model/generator.hpp"

#include <string>

namespace daf::model {

namespace {

template <typename Get>
GeneratorBatch pack(Index count, Get&& get) {
  if (count < 1) throw ContractError("cannot build an empty batch");
  const data::SeriesWindow& first = get(0);
  const Index T = first.history(), tau = first.horizon(), dxi = first.covariates.rows();
  GeneratorBatch b;
  b.batch = count;
  b.history = T;
  b.horizon = tau;
  b.inputs.resize(1 + dxi, count * T);
  b.future_covariates.resize(dxi, count * tau);
  b.history_targets.resize(1, count * T);
  b.future_targets.resize(1, count * tau);
  for (Index i = 0; i < count; ++i) {
    const auto& w = get(i);
    if (!w.scaled) throw ContractError("generator batches need scaled windows");
    if (w.history() != T || w.horizon() != tau || w.covariates.rows() != dxi || w.covariates.cols() != T + tau) {
      throw DimensionError("windows in a batch must share history, horizon and covariates");
    }
    b.inputs.block(0, i * T, 1, T) = w.x.transpose();
    if (dxi > 0) {
      b.inputs.block(1, i * T, dxi, T) = w.covariates.leftCols(T);
      b.future_covariates.middleCols(i * tau, tau) = w.covariates.rightCols(tau);
    }
    b.history_targets.middleCols(i * T, T) = w.x.transpose();
    b.future_targets.middleCols(i * tau, tau) = w.y.transpose();
    b.scales.push_back(w.scale);
    b.series_ids.push_back(w.series_id);
  }
  return b;
}

/// Per-position columns of one embedding: a history block of B segments of
/// length `block_len` valid up to `valid_until`, then one B-column node per
/// later position.
class PositionColumns {
 public:
  PositionColumns(Var block, Index block_len, Index valid_until)
      : block_(block), block_len_(block_len), valid_until_(valid_until) {}

  void append(Var columns) { extra_.push_back(columns); }
  Index last_position() const { return valid_until_ + static_cast<Index>(extra_.size()); }

  // Column references ordered window-major: for each window b, every position in turn.
  std::vector<num::ColumnRef> refs(std::span<const Index> positions, Index batch) const {
    std::vector<num::ColumnRef> out;
    out.reserve(static_cast<std::size_t>(batch) * positions.size());
    for (Index b = 0; b < batch; ++b) {
      for (Index p : positions) {
        if (p < 1 || p > last_position()) throw ContractError("embedding position " + std::to_string(p) + " not available");
        if (p <= valid_until_) out.push_back({0, b * block_len_ + p - 1});
        else out.push_back({static_cast<int>(p - valid_until_), b});
      }
    }
    return out;
  }

  std::vector<Var> sources() const {
    std::vector<Var> out{block_};
    out.insert(out.end(), extra_.begin(), extra_.end());
    return out;
  }

  Var gather(std::span<const Index> positions, Index batch) const {
    return num::gather_cols(sources(), refs(positions, batch));
  }

  // Column of window b at position p, as a plain vector.
  Vector column(Index p, Index b) const {
    if (p <= valid_until_) return block_.value().col(b * block_len_ + p - 1);
    return extra_[static_cast<std::size_t>(p - valid_until_ - 1)].value().col(b);
  }

 private:
  Var block_;
  Index block_len_;
  Index valid_until_;
  std::vector<Var> extra_;
};

std::vector<Index> range(Index first, Index last) {
  std::vector<Index> out;
  for (Index p = first; p <= last; ++p) out.push_back(p);
  return out;
}

Var patterns_of(Var inputs, Index segment_length, const GeneratorVars& g) {
  std::vector<Var> parts;
  parts.reserve(g.pattern.size());
  for (const auto& c : g.pattern) parts.push_back(num::conv1d(inputs, c.kernel, c.bias, c.size, segment_length));
  return parts.size() == 1 ? parts.front() : num::concat_rows(parts);
}

}  // namespace

GeneratorBatch make_batch(std::span<const data::SeriesWindow> windows) {
  return pack(static_cast<Index>(windows.size()),
              [&](Index i) -> const data::SeriesWindow& { return windows[static_cast<std::size_t>(i)]; });
}

GeneratorBatch make_batch(std::span<const data::SeriesWindow* const> windows) {
  return pack(static_cast<Index>(windows.size()),
              [&](Index i) -> const data::SeriesWindow& { return *windows[static_cast<std::size_t>(i)]; });
}

Encoded encode(Var inputs, Index segment_length, const GeneratorVars& g) {
  Index widest = 0;
  for (const auto& c : g.pattern) widest = std::max(widest, c.size);
  if (segment_length < widest) {
    throw InputTooShortError("input of length " + std::to_string(segment_length) + " is shorter than kernel size " +
                             std::to_string(widest));
  }
  return {patterns_of(inputs, segment_length, g), num::mlp_forward(inputs, g.value)};
}

QueryKey project_qk(Var patterns, const GeneratorVars& g) {
  Var h = patterns;
  for (const auto& layer : g.qk_trunk) h = num::relu(num::linear(layer.weight, h, layer.bias));
  return {num::linear(g.query.weight, h, g.query.bias), num::linear(g.key.weight, h, g.key.bias)};
}

GeneratorOutput generator_forward(num::Tape& tape, const GeneratorBatch& batch, const GeneratorVars& g,
                                  const ModelConfig& config, const ForwardOptions& options) {
  const Index B = batch.batch, T = batch.history, tau = batch.horizon;
  const Index s = config.max_kernel(), half = config.half_width();
  const Index dxi = batch.future_covariates.rows();
  if (tau < 1) throw ContractError("forecast horizon must be at least 1");
  if (T < config.min_history()) {
    throw InputTooShortError("history of length " + std::to_string(T) + " is shorter than the minimum " +
                             std::to_string(config.min_history()) + " for kernel size " + std::to_string(s));
  }
  const bool trace = options.record_trace;

  GeneratorOutput out;
  Var inputs = tape.constant(batch.inputs);
  const auto enc = encode(inputs, T, g);
  out.history_qk = project_qk(enc.patterns, g);
  std::vector<Matrix> interp_weights;
  Var o_hist;
  if (options.reconstruct || trace) {
    o_hist = interpolate(out.history_qk.queries, out.history_qk.keys, enc.values, T, g.output,
                         trace ? &interp_weights : nullptr);
    out.reconstruction = num::mlp_forward(o_hist, g.decoder);
  }

  // Input, value and query/key columns of the growing sequence. Query/key
  // columns of the history encoding are exact up to T - half; beyond that
  // their windows reach the appended predictions.
  PositionColumns input_cols(inputs, T, T);
  PositionColumns value_cols(enc.values, T, T);
  PositionColumns query_cols(out.history_qk.queries, T, T - half);
  PositionColumns key_cols(out.history_qk.keys, T, T - half);

  auto append_prediction = [&](Var prediction, Index position) {
    Var column = prediction;
    if (dxi > 0) {
      Var cov = tape.constant(batch.future_covariates(Eigen::all, Eigen::seqN(position - T - 1, B, tau)));
      const Var parts[] = {prediction, cov};
      column = num::concat_rows(parts);
    }
    input_cols.append(column);
    return column;
  };

  std::vector<Var> predictions;
  std::vector<Matrix> step_weights;
  std::vector<ExtrapolationIndices> step_indices;
  std::vector<Var> step_outputs;
  for (Index k = 1; k <= tau; ++k) {
    const Index L = T + k - 1;
    if (k >= 2) {
      Var column = append_prediction(predictions.back(), L);
      value_cols.append(num::mlp_forward(column, g.value));
      // The window centred on the new query position ends at L.
      const Index centre = L - half;
      const auto window = range(centre - half, centre + half);
      Var x_window = input_cols.gather(window, B);
      Var p_window = patterns_of(x_window, 2 * half + 1, g);
      std::vector<num::ColumnRef> centre_refs;
      for (Index b = 0; b < B; ++b) centre_refs.push_back({0, b * (2 * half + 1) + half});
      Var p_centre = num::gather_cols(std::span(&p_window, 1), centre_refs);
      const auto qk = project_qk(p_centre, g);
      query_cols.append(qk.queries);
      key_cols.append(qk.keys);
    }
    const auto idx = extrapolation_indices(L, s);
    const auto key_positions = range(idx.first_key, idx.last_key);
    const auto value_positions = range(idx.value_of(idx.first_key), idx.value_of(idx.last_key));
    const Index query_position[] = {idx.query};
    Var q = query_cols.gather(query_position, B);
    Matrix weights;
    Var mixed = num::gather_attention(q, key_cols.sources(), key_cols.refs(key_positions, B), value_cols.sources(),
                                      value_cols.refs(value_positions, B), idx.neighbors(),
                                      trace ? &weights : nullptr);
    Var o = num::mlp_forward(mixed, g.output);
    predictions.push_back(num::mlp_forward(o, g.decoder));
    if (trace) {
      step_weights.push_back(std::move(weights));
      step_indices.push_back(idx);
      step_outputs.push_back(o);
    }
  }

  std::vector<num::ColumnRef> forecast_refs;
  for (Index b = 0; b < B; ++b) {
    for (Index k = 0; k < tau; ++k) forecast_refs.push_back({static_cast<int>(k), b});
  }
  out.forecast = num::gather_cols(predictions, forecast_refs);

  if (options.forecast_qk || trace) {
    // Encoding of the full sequence history + forecast at positions T+1..T+tau.
    append_prediction(predictions.back(), T + tau);
    const Index width = tau + half;
    Var x_tail = input_cols.gather(range(T + 1 - half, T + tau), B);
    Var p_tail_all = patterns_of(x_tail, width, g);
    std::vector<num::ColumnRef> refs;
    for (Index b = 0; b < B; ++b) {
      for (Index j = 0; j < tau; ++j) refs.push_back({0, b * width + half + j});
    }
    out.forecast_qk = project_qk(num::gather_cols(std::span(&p_tail_all, 1), refs), g);
  }

  if (trace) {
    const Var last_value = num::mlp_forward(input_cols.gather(std::vector<Index>{T + tau}, B), g.value);
    value_cols.append(last_value);
    const Index d = out.history_qk.queries.rows();
    const Index h = enc.values.rows();
    for (Index b = 0; b < B; ++b) {
      AttentionTrace tr;
      tr.series_id = batch.series_ids[static_cast<std::size_t>(b)];
      tr.queries.resize(d, T + tau);
      tr.keys.resize(d, T + tau);
      tr.values.resize(h, T + tau);
      tr.outputs.resize(h, T + tau);
      tr.queries.leftCols(T) = out.history_qk.queries.value().middleCols(b * T, T);
      tr.keys.leftCols(T) = out.history_qk.keys.value().middleCols(b * T, T);
      tr.queries.rightCols(tau) = out.forecast_qk->queries.value().middleCols(b * tau, tau);
      tr.keys.rightCols(tau) = out.forecast_qk->keys.value().middleCols(b * tau, tau);
      for (Index p = 1; p <= T + tau; ++p) tr.values.col(p - 1) = value_cols.column(p, b);
      tr.outputs.leftCols(T) = o_hist.value().middleCols(b * T, T);
      const Matrix& A = interp_weights[static_cast<std::size_t>(b)];
      for (Index t = 1; t <= T; ++t) {
        AttentionRow row;
        row.position = t;
        row.neighbors = interpolation_neighborhood(t, T);
        row.value_positions = row.neighbors;
        row.weights.resize(T - 1);
        for (std::size_t j = 0; j < row.neighbors.size(); ++j) {
          row.weights(static_cast<Index>(j)) = A(t - 1, row.neighbors[j] - 1);
        }
        tr.rows.push_back(std::move(row));
      }
      for (Index k = 0; k < tau; ++k) {
        const auto& idx = step_indices[static_cast<std::size_t>(k)];
        AttentionRow row;
        row.position = T + k + 1;
        row.neighbors = range(idx.first_key, idx.last_key);
        for (Index t : row.neighbors) row.value_positions.push_back(idx.value_of(t));
        row.weights = step_weights[static_cast<std::size_t>(k)].col(b);
        tr.outputs.col(T + k) = step_outputs[static_cast<std::size_t>(k)].value().col(b);
        tr.rows.push_back(std::move(row));
      }
      out.traces.push_back(std::move(tr));
    }
  }
  return out;
}

Var discriminate(Var latent, std::span<const num::AffineLayer> disc) {
  return num::sigmoid(num::mlp_forward(latent, disc));
}

Var latent_set(const GeneratorOutput& out, bool include_forecast_region) {
  std::vector<Var> parts{out.history_qk.queries, out.history_qk.keys};
  if (include_forecast_region) {
    if (!out.forecast_qk) throw ContractError("forecast-region queries/keys were not computed");
    parts.push_back(out.forecast_qk->queries);
    parts.push_back(out.forecast_qk->keys);
  }
  return num::concat_cols(parts);
}

}  // namespace daf::model
