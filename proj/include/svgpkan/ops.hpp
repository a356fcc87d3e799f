#pragma once

#include "svgpkan/tape.hpp"
#include "svgpkan/tensor.hpp"

namespace svgpkan {

struct CholeskyError : std::runtime_error {
    i64 batch;
    i64 pivot;
    CholeskyError(i64 b, i64 p, const std::string& msg) : std::runtime_error(msg), batch(b), pivot(p) {}
};

struct TriangularSolveError : std::runtime_error {
    i64 batch;
    i64 index;
    TriangularSolveError(i64 b, i64 i, const std::string& msg) : std::runtime_error(msg), batch(b), index(i) {}
};

// Broadcasting follows numpy rules: align trailing dims, size-1 stretches.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);
// Sums gradient over broadcast axes so it matches the pre-broadcast shape.
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
// max(a, floor); gradient flows only through un-clamped elements.
Tensor clamp_min(const Tensor& a, double floor);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdims = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdims = false);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, const std::vector<i64>& start, const std::vector<i64>& stop);
Tensor concat(const std::vector<Tensor>& ts, int axis);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
// Swaps the last two axes (batched matrix transpose).
Tensor transpose2(const Tensor& a);

// Batched matmul over broadcastable leading dims; last two dims contract.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched lower Cholesky of SPD matrices (..., M, M). Throws CholeskyError
// with batch and pivot index when a pivot is not strictly positive.
Tensor cholesky(const Tensor& a);
// Solves op(L) X = B for lower-triangular L, op = transpose when trans.
// L: (..., M, M), B: (..., M, K), leading dims broadcast.
Tensor triangular_solve(const Tensor& L, const Tensor& B, bool trans);

// (..., M) -> (..., M, M) with the vector on the diagonal.
Tensor diag_embed(const Tensor& a);
// (..., M, M) -> (..., M).
Tensor diagonal(const Tensor& a);
// Packed strict lower triangle (..., M(M-1)/2), rows ordered 1..M-1, to
// (..., M, M) with zero diagonal and upper part.
Tensor strict_lower_from_packed(const Tensor& a, i64 m);

// x: (N, Cin, H, W), w: (Cout, Cin, k, k), zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
// x: (N, Cout, H, W), w: (Cout, Cin, k, k); adjoint of conv2d in x.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int pad, int output_pad);

}  // namespace svgpkan
