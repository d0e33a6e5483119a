#pragma once

#include <span>
#include <vector>

#include "ocvit/tensor.hpp"

namespace ocvit {

// Structural ops. All matrices are row-major [rows, cols].

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);     // [N,K] x [K,M]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [N,K] x [M,K]^T -> [N,M]
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

/// y = x W + b for x [N,d_in], W [d_in,d_out], b [d_out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Elementwise x * Phi(x) with the exact erf-based normal CDF.
Tensor gelu(const Tensor& x);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

/// Row-wise (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

/// Row-wise standardization without affine parameters.
Tensor instance_norm(const Tensor& x, double eps);

struct MsaParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Multi-head scaled dot-product self-attention over [T,d] tokens.
/// Per head: softmax(Q K^T / sqrt(d/h)) V; heads concatenated, then the
/// output projection. d must be divisible by the head count.
Tensor msa(const Tensor& tokens, const MsaParams& p, std::size_t heads);

/// Mean negative log likelihood of two-way softmax over [N,2] logits,
/// computed through log-sum-exp. Labels must be 0 (target) or 1 (noise).
Tensor bce_softmax_loss(const Tensor& logits, std::span<const int> labels);

/// Plain binary cross entropy on probabilities p = P(y=1).
double bce_loss(std::span<const double> probs, std::span<const int> labels);

}  // namespace ocvit
