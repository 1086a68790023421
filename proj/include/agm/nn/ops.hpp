// ops.hpp
//
// Pure forward/backward kernels. Each backward takes the forward inputs plus
// the upstream gradient and returns gradients for every differentiable input.
// The Tape composes these; tests call them directly.

#pragma once

#include <cstddef>
#include <span>

#include "agm/nn/tensor.hpp"

namespace agm::nn
{

struct ConvGeometry
{
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation. input CxHxW, weights KxCxkhxkw, bias {K}. Output KxH'xW'
/// with H' = (H + 2p - kh) / s + 1.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, ConvGeometry geom);

struct Conv2dGrads
{
    Tensor input;    ///< empty when not requested
    Tensor weights;
    Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, ConvGeometry geom,
                            bool want_input_grad);

Tensor relu(const Tensor& input);

/// Subgradient 0 at exactly 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// KxHxW -> {K}, per-channel spatial mean.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

/// weights DxN, bias {D}, input {N} -> {D}.
Tensor linear(const Tensor& weights, const Tensor& bias, const Tensor& input);

struct LinearGrads
{
    Tensor weights;
    Tensor bias;
    Tensor input;
};

LinearGrads linear_backward(const Tensor& weights, const Tensor& input, const Tensor& grad_out);

/// Smallest norm accepted by l2_normalize.
inline constexpr double kMinNorm = 1e-12;

/// v / ||v||. Throws DegenerateEmbeddingError when ||v|| <= kMinNorm.
Tensor l2_normalize(const Tensor& v);

/// d(v/||v||)^T g = (g - u (u.g)) / ||v||, u = v/||v||.
Tensor l2_normalize_backward(const Tensor& v, const Tensor& grad_out);

/// Scalar {1} result.
Tensor dot(const Tensor& a, const Tensor& b);

/// Mean of the selected rows of a VxD table -> {D}. rows must be nonempty.
Tensor embedding_mean(const Tensor& table, std::span<const std::size_t> rows);
Tensor embedding_mean_backward(const Shape& table_shape, std::span<const std::size_t> rows, const Tensor& grad_out);

}  // namespace agm::nn
