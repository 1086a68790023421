// ops.cpp

#include "agm/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "agm/error.hpp"

namespace agm::nn
{

namespace
{

struct ConvDims
{
    std::size_t C, H, W, K, kh, kw, Ho, Wo;
};

ConvDims check_conv(const Tensor& input, const Tensor& weights, ConvGeometry geom)
{
    if (input.rank() != 3)
        throw DimensionError("conv2d: input must be CxHxW, got " + shape_string(input.shape()));
    if (weights.rank() != 4)
        throw DimensionError("conv2d: weights must be KxCxkhxkw, got " + shape_string(weights.shape()));
    if (geom.stride == 0)
        throw ValueError("conv2d: stride must be positive");
    ConvDims d{input.dim(0), input.dim(1), input.dim(2), weights.dim(0), weights.dim(2), weights.dim(3), 0, 0};
    if (weights.dim(1) != d.C)
        throw DimensionError("conv2d: weights expect " + std::to_string(weights.dim(1)) + " channels, input has " +
                             std::to_string(d.C));
    const std::size_t Hp = d.H + 2 * geom.padding;
    const std::size_t Wp = d.W + 2 * geom.padding;
    if (d.kh == 0 || d.kw == 0 || d.kh > Hp || d.kw > Wp)
        throw DimensionError("conv2d: kernel " + shape_string(weights.shape()) + " larger than padded input");
    d.Ho = (Hp - d.kh) / geom.stride + 1;
    d.Wo = (Wp - d.kw) / geom.stride + 1;
    return d;
}

// Output index range [lo, hi) along one axis for which o*s + k - p lands in [0, n).
std::pair<std::size_t, std::size_t> valid_range(std::size_t n_out, std::size_t n_in, std::size_t k, ConvGeometry g)
{
    const long s = static_cast<long>(g.stride);
    const long off = static_cast<long>(k) - static_cast<long>(g.padding);
    long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long hi = (static_cast<long>(n_in) - 1 - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<long>(hi, static_cast<long>(n_out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, ConvGeometry geom)
{
    const ConvDims d = check_conv(input, weights, geom);
    if (bias.size() != d.K)
        throw DimensionError("conv2d: bias has " + std::to_string(bias.size()) + " values, expected " +
                             std::to_string(d.K));

    Tensor out({d.K, d.Ho, d.Wo});
    const double* in = input.data().data();
    const double* w = weights.data().data();
    double* o = out.data().data();
    const std::size_t s = geom.stride;

    for (std::size_t k = 0; k < d.K; ++k)
    {
        double* ok = o + k * d.Ho * d.Wo;
        std::fill(ok, ok + d.Ho * d.Wo, bias[k]);
        for (std::size_t c = 0; c < d.C; ++c)
        {
            const double* ic = in + c * d.H * d.W;
            for (std::size_t ky = 0; ky < d.kh; ++ky)
            {
                const auto [ylo, yhi] = valid_range(d.Ho, d.H, ky, geom);
                for (std::size_t kx = 0; kx < d.kw; ++kx)
                {
                    const auto [xlo, xhi] = valid_range(d.Wo, d.W, kx, geom);
                    const double wv = w[((k * d.C + c) * d.kh + ky) * d.kw + kx];
                    if (xlo == xhi)
                        continue;
                    const std::size_t ix0 = xlo * s + kx - geom.padding;
                    for (std::size_t oy = ylo; oy < yhi; ++oy)
                    {
                        const double* row = ic + (oy * s + ky - geom.padding) * d.W + ix0;
                        double* orow = ok + oy * d.Wo + xlo;
                        const std::size_t n = xhi - xlo;
                        for (std::size_t j = 0; j < n; ++j)
                            orow[j] += wv * row[j * s];
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, ConvGeometry geom,
                            bool want_input_grad)
{
    const ConvDims d = check_conv(input, weights, geom);
    if (grad_out.shape() != Shape{d.K, d.Ho, d.Wo})
        throw DimensionError("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()));

    Conv2dGrads g;
    g.weights = Tensor(weights.shape());
    g.bias = Tensor({d.K});
    if (want_input_grad)
        g.input = Tensor(input.shape());

    const double* in = input.data().data();
    const double* w = weights.data().data();
    const double* go = grad_out.data().data();
    double* gw = g.weights.data().data();
    double* gi = want_input_grad ? g.input.data().data() : nullptr;
    const std::size_t s = geom.stride;

    for (std::size_t k = 0; k < d.K; ++k)
    {
        const double* gk = go + k * d.Ho * d.Wo;
        double bsum = 0.0;
        for (std::size_t i = 0; i < d.Ho * d.Wo; ++i)
            bsum += gk[i];
        g.bias[k] = bsum;

        for (std::size_t c = 0; c < d.C; ++c)
        {
            const double* ic = in + c * d.H * d.W;
            double* gic = gi ? gi + c * d.H * d.W : nullptr;
            for (std::size_t ky = 0; ky < d.kh; ++ky)
            {
                const auto [ylo, yhi] = valid_range(d.Ho, d.H, ky, geom);
                for (std::size_t kx = 0; kx < d.kw; ++kx)
                {
                    const auto [xlo, xhi] = valid_range(d.Wo, d.W, kx, geom);
                    const std::size_t widx = ((k * d.C + c) * d.kh + ky) * d.kw + kx;
                    const double wv = w[widx];
                    if (xlo == xhi)
                        continue;
                    const std::size_t ix0 = xlo * s + kx - geom.padding;
                    const std::size_t n = xhi - xlo;
                    double acc = 0.0;
                    for (std::size_t oy = ylo; oy < yhi; ++oy)
                    {
                        const std::size_t base = (oy * s + ky - geom.padding) * d.W + ix0;
                        const double* row = ic + base;
                        const double* grow = gk + oy * d.Wo + xlo;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += grow[j] * row[j * s];
                        if (gic)
                        {
                            double* girow = gic + base;
                            for (std::size_t j = 0; j < n; ++j)
                                girow[j * s] += wv * grow[j];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    return g;
}

Tensor relu(const Tensor& input)
{
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out)
{
    if (input.shape() != grad_out.shape())
        throw DimensionError("relu_backward: shape mismatch");
    Tensor g(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

Tensor global_avg_pool(const Tensor& input)
{
    if (input.rank() != 3)
        throw DimensionError("global_avg_pool: input must be KxHxW, got " + shape_string(input.shape()));
    const std::size_t K = input.dim(0), n = input.dim(1) * input.dim(2);
    if (n == 0)
        throw DimensionError("global_avg_pool: empty spatial dims");
    Tensor out({K});
    for (std::size_t k = 0; k < K; ++k)
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sum += input[k * n + i];
        out[k] = sum / static_cast<double>(n);
    }
    return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out)
{
    if (input_shape.size() != 3 || grad_out.size() != input_shape[0])
        throw DimensionError("global_avg_pool_backward: shape mismatch");
    const std::size_t K = input_shape[0], n = input_shape[1] * input_shape[2];
    if (n == 0)
        throw DimensionError("global_avg_pool_backward: empty spatial dims");
    Tensor g(input_shape);
    for (std::size_t k = 0; k < K; ++k)
    {
        const double v = grad_out[k] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            g[k * n + i] = v;
    }
    return g;
}

Tensor linear(const Tensor& weights, const Tensor& bias, const Tensor& input)
{
    if (weights.rank() != 2)
        throw DimensionError("linear: weights must be DxN, got " + shape_string(weights.shape()));
    const std::size_t D = weights.dim(0), N = weights.dim(1);
    if (input.size() != N || bias.size() != D)
        throw DimensionError("linear: weights " + shape_string(weights.shape()) + ", bias " +
                             shape_string(bias.shape()) + ", input " + shape_string(input.shape()));
    Tensor out({D});
    for (std::size_t d = 0; d < D; ++d)
    {
        double acc = bias[d];
        for (std::size_t n = 0; n < N; ++n)
            acc += weights[d * N + n] * input[n];
        out[d] = acc;
    }
    return out;
}

LinearGrads linear_backward(const Tensor& weights, const Tensor& input, const Tensor& grad_out)
{
    const std::size_t D = weights.dim(0), N = weights.dim(1);
    if (input.size() != N || grad_out.size() != D)
        throw DimensionError("linear_backward: shape mismatch");
    LinearGrads g{Tensor(weights.shape()), Tensor({D}), Tensor({N})};
    for (std::size_t d = 0; d < D; ++d)
    {
        const double go = grad_out[d];
        g.bias[d] = go;
        for (std::size_t n = 0; n < N; ++n)
        {
            g.weights[d * N + n] = go * input[n];
            g.input[n] += weights[d * N + n] * go;
        }
    }
    return g;
}

namespace
{

double norm2(const Tensor& v)
{
    double s = 0.0;
    for (double x : v.data())
        s += x * x;
    return std::sqrt(s);
}

}  // namespace

Tensor l2_normalize(const Tensor& v)
{
    const double n = norm2(v);
    if (!(n > kMinNorm))
        throw DegenerateEmbeddingError("normalize: vector norm " + std::to_string(n) + " is too small");
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = v[i] / n;
    return out;
}

Tensor l2_normalize_backward(const Tensor& v, const Tensor& grad_out)
{
    if (v.size() != grad_out.size())
        throw DimensionError("l2_normalize_backward: shape mismatch");
    const Tensor u = l2_normalize(v);
    const double n = norm2(v);
    double ug = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        ug += u[i] * grad_out[i];
    Tensor g(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
        g[i] = (grad_out[i] - u[i] * ug) / n;
    return g;
}

Tensor dot(const Tensor& a, const Tensor& b)
{
    if (a.size() != b.size())
        throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return Tensor::scalar(s);
}

Tensor embedding_mean(const Tensor& table, std::span<const std::size_t> rows)
{
    if (table.rank() != 2)
        throw DimensionError("embedding_mean: table must be VxD");
    if (rows.empty())
        throw DimensionError("embedding_mean: no rows selected");
    const std::size_t V = table.dim(0), D = table.dim(1);
    Tensor out({D});
    for (std::size_t r : rows)
    {
        if (r >= V)
            throw DimensionError("embedding_mean: row " + std::to_string(r) + " out of range");
        for (std::size_t d = 0; d < D; ++d)
            out[d] += table[r * D + d];
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& x : out.data())
        x *= inv;
    return out;
}

Tensor embedding_mean_backward(const Shape& table_shape, std::span<const std::size_t> rows, const Tensor& grad_out)
{
    if (table_shape.size() != 2 || grad_out.size() != table_shape[1] || rows.empty())
        throw DimensionError("embedding_mean_backward: shape mismatch");
    const std::size_t D = table_shape[1];
    Tensor g(table_shape);
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r : rows)
        for (std::size_t d = 0; d < D; ++d)
            g[r * D + d] += grad_out[d] * inv;
    return g;
}

}  // namespace agm::nn
