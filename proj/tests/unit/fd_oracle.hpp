// fd_oracle.hpp
//
// Central finite differences used as the independent gradient oracle in tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "agm/nn/tensor.hpp"
#include "agm/rng.hpp"

namespace agm::test
{

inline constexpr double kFdStep = 1e-6;

/// d f / d x by central differences, one coordinate at a time.
inline nn::Tensor central_difference(const std::function<double(const nn::Tensor&)>& f, const nn::Tensor& x,
                                     double h = kFdStep)
{
    nn::Tensor g(x.shape());
    nn::Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(probe);
        probe[i] = orig - h;
        const double down = f(probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both are zero.
inline double relative_error(const nn::Tensor& a, const nn::Tensor& b)
{
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline nn::Tensor random_tensor(nn::Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0)
{
    nn::Tensor t(std::move(shape));
    for (double& v : t.data())
        v = rng.uniform(lo, hi);
    return t;
}

/// sum_i r_i * t_i: turns a tensor-valued op into a scalar for FD checks.
inline double project(const nn::Tensor& t, const nn::Tensor& r)
{
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += t[i] * r[i];
    return s;
}

}  // namespace agm::test
