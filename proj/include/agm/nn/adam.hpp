// adam.hpp
//
// Adam with bias correction and decoupled weight decay. Defaults follow the
// fine-tuning table the toy trainer mirrors: betas (0.9, 0.98), wd 0.01.

#pragma once

#include <cstdint>

#include "agm/nn/tensor.hpp"

namespace agm::nn
{

struct AdamConfig
{
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamState
{
    Tensor m;
    Tensor v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const Tensor& params) { return {Tensor(params.shape()), Tensor(params.shape()), 0}; }
};

/// One in-place update:
///   p <- p - lr*wd*p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws ValueError for lr <= 0, DimensionError when shapes disagree.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace agm::nn
