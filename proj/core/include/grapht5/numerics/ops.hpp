#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "grapht5/numerics/tensor.hpp"

namespace grapht5::numerics {

using Mask = std::vector<bool>;
using TokenId = std::int32_t;

std::size_t count_true(const Mask &mask);

// Differentiable primitives. Every op validates shapes (DimensionError),
// rejects non-finite results (EvaluationError) and records its gradient rule
// on the active tape when any input requires a gradient.

template <typename T> Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b);
// a · bᵀ without materialising the transpose.
template <typename T> Tensor<T> matmul_nt(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> transpose(const Tensor<T> &a);

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> scale(const Tensor<T> &a, T factor);
// x[m×n] + row[1×n], broadcast over rows.
template <typename T> Tensor<T> add_row(const Tensor<T> &x, const Tensor<T> &row);
template <typename T> Tensor<T> relu(const Tensor<T> &x);

template <typename T> Tensor<T> sum(const Tensor<T> &x);
template <typename T> Tensor<T> mean(const Tensor<T> &x);

// Softmax over the last axis, max-subtracted.
template <typename T> Tensor<T> softmax(const Tensor<T> &x);

// Row-wise softmax of a [q×k] score matrix where key j is visible to query i
// iff key_valid[j] and (!causal || j <= i). Hidden entries are exactly zero.
// A row with no visible key comes out all-zero.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T> &scores, const Mask &key_valid, bool causal);

// Normalises each row of x[...×d] to zero mean / unit (biased) variance, then
// applies gamma and beta elementwise.
template <typename T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma, const Tensor<T> &beta,
                     T eps = T(1e-5));

// Rows of table[V×d] selected by ids.
template <typename T>
Tensor<T> embedding(const Tensor<T> &table, std::span<const TokenId> ids);

template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>> &parts);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>> &parts);
template <typename T> Tensor<T> slice_rows(const Tensor<T> &x, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_cols(const Tensor<T> &x, std::size_t begin, std::size_t end);

// Keeps rows whose mask bit is set; other rows become exactly zero.
template <typename T> Tensor<T> zero_rows(const Tensor<T> &x, const Mask &keep);

// Mean over rows with a set mask bit -> [1×d]. ContractError on an empty mask.
template <typename T> Tensor<T> masked_mean_rows(const Tensor<T> &x, const Mask &mask);

// Mean of -log softmax(logits[t])[targets[t]] over positions whose target is
// not ignore_id. ContractError when every position is ignored.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T> &logits, std::span<const TokenId> targets,
                        TokenId ignore_id);

// Inverted dropout; identity when p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T> &x, T p, std::mt19937_64 &rng);

}  // namespace grapht5::numerics
