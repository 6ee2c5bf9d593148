#pragma once

#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace dapt {

// Dense ops over rank 1..3 tensors. Every op registers a backward rule; all
// reductions accumulate in 64-bit floats before storing 32-bit results.

// Matrix product. Rank-2 x rank-2, or batched rank-3 forms where a leading
// extent of 1 (or a missing leading extent) broadcasts.
Tensor matmul(const Tensor& a, const Tensor& b);

// Swaps the last two extents (materialized).
Tensor transpose_last2(const Tensor& x);

// Elementwise sum. Supports same-shape inputs, a rank-1 `b` broadcast over the
// last extent (bias add), and a rank-2 `b` broadcast over the leading extent
// of a rank-3 `a` (position-table add).
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, float s);

// Max-subtraction stabilized softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);

// Normalizes the last extent to zero mean / unit variance, then applies gain
// and bias (both rank-1 of that extent).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float epsilon);

// tanh-approximation GELU.
Tensor gelu(const Tensor& x);

// Mean negative log-softmax over rows whose target != ignore_index.
// Returns a scalar; all-ignored input gives 0 with zero gradient.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index);

// Gathers rows of `table` (V,E) by id; output is (ids.size(), E).
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

Tensor reshape(const Tensor& x, Shape new_shape);

// (B, L, H) -> (B*num_heads, L, H/num_heads) and back.
Tensor split_heads(const Tensor& x, int num_heads);
Tensor merge_heads(const Tensor& x, int num_heads);

// Selects one sequence position: (B, L, H) -> (B, H).
Tensor take_position(const Tensor& x, int64_t position);

// Adds a constant per-key bias to attention scores (B*num_heads, Lq, Lk);
// key_bias is row-major (B, Lk). Gradient passes through unchanged.
Tensor add_key_bias(const Tensor& scores, const std::vector<float>& key_bias,
                    int64_t batch, int num_heads);

// Inverted dropout; identity when !train or p == 0.
Tensor dropout(const Tensor& x, float p, Rng& rng, bool train);

Tensor sum_all(const Tensor& x);

}  // namespace dapt
