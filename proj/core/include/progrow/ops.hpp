#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "progrow/rng.hpp"
#include "progrow/tensor.hpp"

namespace progrow {

// ---- Linear algebra ---------------------------------------------------------

// a[m x k] * b[k x n]. Reduction order is fixed (row of a, then k, then n), so
// results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b for a[m x k], b[m x n].
Tensor matmul_at_b(const Tensor& a, const Tensor& b);
// a * b^T for a[m x k], b[n x k].
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

struct MatmulGrads {
  Tensor da;  // g * b^T
  Tensor db;  // a^T * g
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g);

// ---- Elementwise helpers ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);

// Columns [begin, begin + width) of a rank-2 tensor.
Tensor column_block(const Tensor& a, std::size_t begin, std::size_t width);
void set_column_block(Tensor& dst, std::size_t begin, const Tensor& block);
void add_column_block(Tensor& dst, std::size_t begin, const Tensor& block);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// ---- Activations ------------------------------------------------------------

Tensor softmax_rows(const Tensor& x);
// Adjoint given the softmax output y and upstream gradient g.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& g);

// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& g);

// ---- Normalization ----------------------------------------------------------

// Per-row standardization with population variance, then gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

struct LayerNormGrads {
  Tensor dx;
  Tensor dgain;
  Tensor dbias;
};
LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain, double eps,
                                   const Tensor& g);

// ---- Pooling ----------------------------------------------------------------

// Half-open row range [begin, end).
struct RowGroup {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const RowGroup&, const RowGroup&) = default;
};

// Average consecutive groups of k rows; a trailing short group of r rows is
// averaged over r. Output has ceil(m / k) rows.
Tensor mean_pool_rows(const Tensor& x, std::size_t k);

// Output row i is the mean of input rows groups[i].
Tensor pool_rows(const Tensor& x, std::span<const RowGroup> groups);
// Adjoint of pool_rows back onto `input_rows` rows.
Tensor pool_rows_backward(const Tensor& g, std::span<const RowGroup> groups,
                          std::size_t input_rows);

// ---- Dropout ----------------------------------------------------------------

// Mask of 0 (dropped) or 1/(1-p) (kept) entries. With p == 0 the mask is all
// ones and consumes no randomness.
Tensor dropout_mask(const Shape& shape, double p, Rng& rng);
// Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// ---- Loss -------------------------------------------------------------------

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor grad;
};

// Mean over rows of -log softmax(logits)[target].
CrossEntropyResult cross_entropy_logits(const Tensor& logits, std::span<const TokenId> targets);

}  // namespace progrow
