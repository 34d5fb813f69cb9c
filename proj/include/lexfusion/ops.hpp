#pragma once

// Differentiable primitives over Var. Every function records its result on
// the tape of its first argument; mixing tapes is undefined.
//
// Broadcasting is limited to adding a bias vector to each row of a matrix.
// Rank-1 tensors behave as a single row wherever a matrix is expected.

#include <cstddef>
#include <span>

#include "lexfusion/random.hpp"
#include "lexfusion/tape.hpp"

namespace lexfusion::ops {

/// a + b for equal shapes, or a [r,c] plus a bias b of shape [c] or [1,c].
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; shapes must match.
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var matmul(Var a, Var b);
Var transpose(Var a);

/// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Index the leading axis of a rank-3 tensor.
Var select(Var a, std::size_t index);
Var reshape(Var a, Shape shape);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var leaky_relu(Var a, double slope = 0.2);

/// Row-wise softmax over the last axis.
Var softmax(Var a);
/// Row-wise softmax restricted to entries where mask is non-zero; masked
/// entries come out as exactly 0. Every row needs at least one open entry.
Var masked_softmax(Var a, const Tensor& mask);
/// Row-wise log-sum-exp: shape [1] for a vector, [r,1] for a matrix.
Var log_sum_exp(Var a);

Var sum(Var a);
Var mean(Var a);

/// Gathers rows of `table` ([V,d]) into a [ids.size(), d] matrix.
Var embedding_lookup(Var table, std::span<const std::size_t> ids);

/// Inverted dropout: survivors are divided by the keep probability during
/// training; exact identity when `train` is false or rate is 0.
Var dropout(Var a, double rate, bool train, Rng& rng);

}  // namespace lexfusion::ops
