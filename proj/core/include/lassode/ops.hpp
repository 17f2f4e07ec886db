#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lassode/autodiff.hpp"

namespace lassode::ad {

Var constant(Tensor value);

// Linear algebra.
Var matmul(const Var& a, const Var& b);     // a b
Var matmul_nt(const Var& a, const Var& b);  // a b^T
Var transpose(const Var& a);
/// x W + bias, with bias a 1 x out row.
Var affine(const Var& x, const Var& weight, const Var& bias);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast a 1 x n row over every row
Var mul_row(const Var& a, const Var& row);
Var mul_col(const Var& a, const Var& col);  // broadcast an m x 1 column over every column
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// Gradient is passed only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);

// Row-wise normalizations.
Var softmax_rows(const Var& a);
/// Normalizes each row to zero mean and unit variance; gain/bias may be empty.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

// Structural.
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
/// out[i] = a[indices[i]]; indices may repeat, gradients scatter-add.
Var gather_rows(const Var& a, std::span<const std::size_t> indices);
/// out has `rows` rows, zero except out[indices[i]] += a[i].
Var scatter_rows(const Var& a, std::span<const std::size_t> indices, std::size_t rows);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);

// Reductions to a 1 x 1 scalar.
Var sum(const Var& a);
Var mean(const Var& a);

/// Mixture-of-experts routing weights: per row, keep the `k` largest logits
/// (ties to the lower index), softmax over the kept entries and zero the rest.
Var topk_softmax(const Var& logits, std::size_t k);

/// Forward-only helper returning the selected column indices of each row,
/// in descending logit order with ties broken toward the lower index.
std::vector<std::vector<std::size_t>> topk_indices(const Tensor& logits, std::size_t k);

}  // namespace lassode::ad
