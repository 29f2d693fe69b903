#pragma once

// Differentiable operations over rissc::ad::Tensor.
//
// Broadcasting rule (add only): the right operand may have a single element,
// or a shape equal to a trailing suffix of the left operand's shape. Every
// other mismatch is a ShapeError.

#include <cstdint>
#include <span>

#include "rissc/tensor.hpp"

namespace rissc::ad {

Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] * w[in, out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Batched product: a[N,m,k] * b[N,k,n], or a[N,m,k] * b[N,n,k]^T with transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias (both [D]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row lookup: weight[V,E] indexed by ids with the given leading shape.
Tensor embedding(const Tensor& weight, std::span<const std::int64_t> ids, const Shape& ids_shape);

Tensor reshape(const Tensor& x, Shape shape);

// [a,b,c,d] -> [a,c,b,d]
Tensor swap_axes12(const Tensor& x);

// Complex tensors carry a trailing axis of size 2 (re, im).
// Elementwise complex product of two equally shaped tensors.
Tensor complex_mul(const Tensor& a, const Tensor& b);

// x[B, ..., 2] times one complex coefficient per leading row, coef[B, 2].
Tensor complex_scale(const Tensor& x, const Tensor& coef);

// Scales x[..., 2] by 1/sqrt(max(P, floor)) with P the mean of re^2 + im^2
// over all complex entries.
Tensor normalize_mean_power(const Tensor& x, double floor);

}  // namespace rissc::ad
