#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qamatch/tape.hpp"

// Differentiable operations. Every op validates shapes (DimensionError),
// records a backward rule on the operands' tape and rejects non-finite
// results (NumericError). Matrices are rank 2; "vectors" are rank 1.
namespace qamatch::op {

// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// x[m x n] + bias[n], bias broadcast over rows.
Var add_bias(Var x, Var bias);
// x + c where c is a same-shape constant (no gradient flows into c).
Var add_constant(Var x, const Tensor& c);
Var scale(Var x, double factor);
// factor * x + offset, elementwise.
Var affine(Var x, double factor, double offset);

Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);

// Row-wise softmax with per-row max subtraction.
Var softmax_rows(Var x);
// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-6);

// Vertical stacking of matrices with equal column counts.
Var concat_rows(std::span<const Var> parts);
Var concat_rows(Var a, Var b);
// Concatenation along the last axis; all parts share rank and row count.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var reshape(Var x, Shape shape);

// Scalar reductions, result shape [1].
Var sum(Var x);
Var mean(Var x);

// table[ids[i]] stacked into [n x d].
Var gather_rows(Var table, std::span<const std::int32_t> ids);
// Sliding windows of `width` consecutive rows flattened: [L x d] -> [(L-width+1) x width*d].
Var unfold_rows(Var x, std::size_t width);
// Column-wise max over rows: [m x n] -> [n]. Ties route the gradient to the first maximum.
Var max_over_rows(Var x);
// Mean of rows whose mask entry is nonzero: [m x n] -> [n].
Var masked_mean_rows(Var x, std::span<const std::uint8_t> mask);
// Rows with mask entry zero are replaced by zeros.
Var mask_rows(Var x, std::span<const std::uint8_t> mask);

// (q . a) / (|q| |a| + eps), clamped to [-1, 1]; result shape [1].
Var cosine(Var q, Var a, double eps = 1e-12);

}  // namespace qamatch::op
