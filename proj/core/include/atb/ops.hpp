#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atb/tensor.hpp"

namespace atb::ops {

// Forward kernels shared by the tape and by callers that only need values.
// Reductions (inner products, means, variances, log-sum-exp) accumulate in
// double with a fixed left-to-right order, so single-threaded runs are
// bitwise reproducible.

Tensor matmul(const Tensor& a, const Tensor& b);      // [m x k] * [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m x k] * [n x k]^T
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& bias);
Tensor mul_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, Tensor* x_hat_out = nullptr,
                  std::vector<double>* inv_std_out = nullptr);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> ids);

constexpr std::int64_t kIgnoreTarget = -1;

// Sum over non-ignored rows of -log softmax(logits_row)[target]; count_out
// receives the number of contributing rows.
double cross_entropy_sum(const Tensor& logits, std::span<const std::int64_t> targets,
                         std::size_t* count_out);

// Mean over non-ignored positions; 0 when every position is ignored.
double cross_entropy_mean(const Tensor& logits, std::span<const std::int64_t> targets);

double mse(const Tensor& a, const Tensor& b);

}  // namespace atb::ops
