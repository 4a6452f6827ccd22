#pragma once

#include <span>
#include <vector>

#include "daf/numerics/ops.hpp"

namespace daf::model {

using num::Index;
using num::Matrix;
using num::Var;
using num::Vector;

/// Positions are 1-based throughout this header, matching the time index of
/// the series; column c of an embedding holds position c+1.

/// Interpolation neighborhood of position t in a history of length T: every
/// other position 1..T.
std::vector<Index> interpolation_neighborhood(Index t, Index history);

/// Index rules for predicting position L+1 from a sequence of length L with
/// largest kernel s and half-width h = ceil((s-1)/2):
///  - the query is taken from position L - h, the last window free of padding;
///  - keys range over s..L-h-1, whose windows contain no padding;
///  - key t' is paired with the value that follows its window, t' + h + 1.
struct ExtrapolationIndices {
  Index query = 0;
  Index first_key = 0;
  Index last_key = 0;
  Index value_offset = 0;

  Index neighbors() const { return last_key - first_key + 1; }
  Index value_of(Index key) const { return key + value_offset; }
};

/// Throws InputTooShortError when the neighborhood would be empty.
ExtrapolationIndices extrapolation_indices(Index current_length, Index max_kernel);

/// Softmax of q.k_t'/sqrt(d) over the given 1-based key positions (columns of `keys`).
Vector attention_score(const Eigen::Ref<const Vector>& query, const Matrix& keys, std::span<const Index> neighborhood);

/// Reconstruction outputs for every position of every segment:
/// o_t = MLP_o(sum_{t' != t} alpha(q_t, k_t') v_t'). Result is h x (B*L).
Var interpolate(Var queries, Var keys, Var values, Index segment_length, std::span<const num::AffineLayer> output,
                std::vector<Matrix>* weights = nullptr);

/// Extrapolated output o_{L+1} for each segment of length L = current_length,
/// following the ExtrapolationIndices rules. Result is h x B.
Var extrapolate(Var queries, Var keys, Var values, Index current_length, Index max_kernel,
                std::span<const num::AffineLayer> output, Matrix* weights = nullptr);

}  // namespace daf::model
