#include "daf/model/attention.hpp"

#include <cmath>
#include <string>

namespace daf::model {

std::vector<Index> interpolation_neighborhood(Index t, Index history) {
  if (t < 1 || t > history) throw ContractError("position outside the history");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(history - 1));
  for (Index u = 1; u <= history; ++u) {
    if (u != t) out.push_back(u);
  }
  return out;
}

ExtrapolationIndices extrapolation_indices(Index current_length, Index max_kernel) {
  if (max_kernel < 1 || max_kernel % 2 == 0) throw ConfigError("kernel size must be odd");
  const Index half = max_kernel / 2;  // ceil((s-1)/2) for odd s
  ExtrapolationIndices idx;
  idx.query = current_length - half;
  idx.first_key = max_kernel;
  idx.last_key = current_length - half - 1;
  idx.value_offset = half + 1;
  if (idx.last_key < idx.first_key) {
    throw InputTooShortError("sequence of length " + std::to_string(current_length) +
                             " is too short to extrapolate with kernel size " + std::to_string(max_kernel) +
                             " (need at least " + std::to_string(max_kernel + half + 1) + ")");
  }
  return idx;
}

Vector attention_score(const Eigen::Ref<const Vector>& query, const Matrix& keys, std::span<const Index> neighborhood) {
  if (neighborhood.empty()) throw ContractError("attention over an empty neighborhood");
  if (keys.rows() != query.size()) throw DimensionError("query and key dimensions differ");
  Vector scores(static_cast<Index>(neighborhood.size()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.size()));
  for (std::size_t j = 0; j < neighborhood.size(); ++j) {
    const Index pos = neighborhood[j];
    if (pos < 1 || pos > keys.cols()) throw ContractError("neighbor position out of range");
    scores(static_cast<Index>(j)) = keys.col(pos - 1).dot(query) * inv_sqrt_d;
  }
  return num::softmax(scores);
}

Var interpolate(Var queries, Var keys, Var values, Index segment_length, std::span<const num::AffineLayer> output,
                std::vector<Matrix>* weights) {
  Var mixed = num::self_excluding_attention(queries, keys, values, segment_length, weights);
  return num::mlp_forward(mixed, output);
}

Var extrapolate(Var queries, Var keys, Var values, Index current_length, Index max_kernel,
                std::span<const num::AffineLayer> output, Matrix* weights) {
  const Index L = current_length;
  if (queries.cols() % L != 0 || keys.cols() != queries.cols() || values.cols() != queries.cols()) {
    throw DimensionError("extrapolate: embeddings are not whole segments of length " + std::to_string(L));
  }
  const auto idx = extrapolation_indices(L, max_kernel);
  const Index batch = queries.cols() / L;
  const Index n = idx.neighbors();
  std::vector<num::ColumnRef> q_refs, k_refs, v_refs;
  for (Index b = 0; b < batch; ++b) {
    q_refs.push_back({0, b * L + idx.query - 1});
    for (Index t = idx.first_key; t <= idx.last_key; ++t) {
      k_refs.push_back({0, b * L + t - 1});
      v_refs.push_back({0, b * L + idx.value_of(t) - 1});
    }
  }
  Var q = num::gather_cols(std::span(&queries, 1), q_refs);
  Var k = num::gather_cols(std::span(&keys, 1), k_refs);
  Var v = num::gather_cols(std::span(&values, 1), v_refs);
  return num::mlp_forward(num::segment_attention(q, k, v, n, weights), output);
}

}  // namespace daf::model
