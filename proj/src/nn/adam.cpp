// adam.cpp

#include "agm/nn/adam.hpp"

#include <cmath>

#include "agm/error.hpp"

namespace agm::nn
{

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamConfig& cfg)
{
    if (!(cfg.lr > 0.0))
        throw ValueError("adam_step: learning rate must be positive");
    if (grads.shape() != params.shape() || state.m.shape() != params.shape() || state.v.shape() != params.shape())
        throw DimensionError("adam_step: params " + shape_string(params.shape()) + ", grads " +
                             shape_string(grads.shape()) + ", state " + shape_string(state.m.shape()));

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    auto p = params.data();
    auto g = grads.data();
    auto m = state.m.data();
    auto v = state.v.data();
    for (std::size_t i = 0; i < p.size(); ++i)
    {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= cfg.lr * cfg.weight_decay * p[i];
        p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

}  // namespace agm::nn
