#pragma once

#include <vector>

#include "iprompt/tensor.hpp"

namespace iprompt {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// x: [m x n], v: [n] broadcast along rows.
Tensor add_rowvec(const Tensor& x, const Tensor& v);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] * [k x n]
Tensor transpose(const Tensor& a);                // 2-D

// Normalizes the last axis to zero mean / unit variance, then gain/bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-6);

// Max-subtracted, along any axis.
Tensor softmax(const Tensor& x, int axis);

Tensor gelu(const Tensor& x);  // exact erf form

// cos(a, b) with the norms smoothed by eps so that zero vectors map to 0.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-8);
// Pairwise cosines between the rows of x [n x d] and k [s x d] -> [n x s].
Tensor cosine_matrix(const Tensor& x, const Tensor& k, double eps = 1e-8);

// Mean negative log-softmax at the labels. Logits may hold -inf for masked
// classes; those entries receive exactly zero gradient. A label pointing at
// a -inf entry is a mask violation.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Replaces disallowed columns with -inf; gradient through them is zero.
Tensor mask_logits(const Tensor& logits, const std::vector<uint8_t>& allowed);

// First-axis slicing / concatenation (any rank).
Tensor slice_rows(const Tensor& x, int begin, int end);
Tensor concat_rows(const std::vector<Tensor>& parts);

// 2-D column slicing / concatenation.
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor reshape(const Tensor& x, std::vector<int> shape);

// Copy of x with row r zeroed; no gradient flows through that row.
Tensor zero_row(const Tensor& x, int row);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar

// x: [n x r x d]; sums rows begin..end of the middle axis -> [n x d].
Tensor sum_rows_range(const Tensor& x, int begin, int end);

}  // namespace iprompt
