#pragma once

#include <memory>
#include <span>
#include <vector>

#include "daf/numerics/tape.hpp"

namespace daf::num {

// Every function here records a differentiable node on the tape of its inputs.
// Sequences are laid out with one position per column; a batch of windows of
// equal length L is stored side by side, window b occupying columns
// [b*L, (b+1)*L). Ops that care about window boundaries take that
// `segment_length` explicitly.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

// weight * x + bias, with the bias column broadcast over positions.
Var linear(Var weight, Var x, Var bias);

Var relu(Var x);
Var sigmoid(Var x);
Var square(Var x);
// log(clamp(x, lo, hi)); the gradient is zero where the clamp is active.
Var log_clamped(Var x, double lo, double hi);

// 1x1 reductions.
Var sum(Var x);
Var mean(Var x);

Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, Index begin, Index count);
Var concat_cols(std::span<const Var> parts);

struct ColumnRef {
  int source;
  Index column;
};
// Output column j is column refs[j].column of sources[refs[j].source].
Var gather_cols(std::span<const Var> sources, std::span<const ColumnRef> refs);

/// Same-padded 1-D cross-correlation applied to every segment independently.
///
/// `kernel` is `C_out x (C_in*s)` with column `ci*s + k` holding tap k of input
/// channel ci; `bias` is `C_out x 1`. Each segment is zero-padded by (s-1)/2 on
/// both ends so output length equals input length. s must be odd.
Var conv1d(Var x, Var kernel, Var bias, Index kernel_size, Index segment_length);

/// Attention within each segment of length L where position t attends to all
/// other positions of its own segment and never to itself.
///
/// Scores are q_t.k_t' / sqrt(d), normalized with a max-subtracted softmax;
/// the result column t is sum_t' alpha(t, t') v_t'. `weights`, when given,
/// receives one L x L row-stochastic matrix per segment with a zero diagonal.
Var self_excluding_attention(Var queries, Var keys, Var values, Index segment_length,
                             std::vector<Matrix>* weights = nullptr);

/// One query per segment attending over that segment's n keys.
///
/// `query` is d x B, `keys` d x (B*n), `values` h x (B*n); the result is h x B.
/// `weights`, when given, receives the n x B matrix of attention weights.
Var segment_attention(Var query, Var keys, Var values, Index n, Matrix* weights = nullptr);

/// segment_attention whose keys and values are columns of other nodes, read in
/// place: keys of segment b are key_refs[b*n .. b*n+n), likewise values.
Var gather_attention(Var query, std::span<const Var> key_sources, std::span<const ColumnRef> key_refs,
                     std::span<const Var> value_sources, std::span<const ColumnRef> value_refs, Index n,
                     Matrix* weights = nullptr);

struct AffineLayer {
  Var weight;
  Var bias;
};

/// Position-wise MLP: affine layers with ReLU between them and none after the last.
Var mlp_forward(Var x, std::span<const AffineLayer> layers);

// Max-subtracted softmax of a score vector.
Vector softmax(const Eigen::Ref<const Vector>& scores);

}  // namespace daf::num
