#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "plaus/numeric/tensor.hpp"

// Differentiable ops over 2-D tensors (rows x cols). A 1-D tensor of length
// n is treated as a single row where noted.
namespace plaus::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[r, :] + bias for every row r; bias has cols(a) elements.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// GPT-2 tanh approximation.
Tensor gelu(const Tensor& a);
// Row-wise normalization with affine gain/bias of length cols(a).
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row-wise softmax, stabilized by subtracting the row max. Throws
// NumericError on non-finite input.
Tensor softmax_rows(const Tensor& a);
// Softmax where entry (r, c) with c > r is masked out (square input).
Tensor causal_softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

Tensor slice_cols(const Tensor& a, std::size_t offset, std::size_t width);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor select_row(const Tensor& a, std::size_t r);
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> cols);

// Rows of `table` picked by `ids`.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// a with v added to row r.
Tensor add_to_row(const Tensor& a, const Tensor& v, std::size_t r);
// a with row r replaced by v (gradient for that row flows to v only).
Tensor replace_row(const Tensor& a, const Tensor& v, std::size_t r);

Tensor sum(const Tensor& a);
// Mean over rows of -log softmax(logits[r])[targets[r]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace plaus::ops
