// gradcam.cpp

#include "agm/gradcam/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "agm/error.hpp"

namespace agm::gradcam
{

std::vector<double> channel_weights(const nn::Tensor& grads)
{
    const auto& s = grads.shape();
    if (s.size() != 3 || s[0] == 0 || s[1] == 0 || s[2] == 0)
        throw DimensionError("channel_weights: expected a nonempty KxHxW tensor, got " + nn::shape_string(s));
    const std::size_t plane = s[1] * s[2];
    std::vector<double> alpha(s[0]);
    for (std::size_t k = 0; k < s[0]; ++k)
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
            sum += grads[k * plane + i];
        alpha[k] = sum / static_cast<double>(plane);
    }
    return alpha;
}

nn::Tensor raw_attention(const nn::Tensor& features, const std::vector<double>& alpha)
{
    const auto& s = features.shape();
    if (s.size() != 3)
        throw DimensionError("raw_attention: features must be KxHxW, got " + nn::shape_string(s));
    if (s[0] != alpha.size())
        throw DimensionError("raw_attention: " + std::to_string(alpha.size()) + " weights for " + std::to_string(s[0]) +
                             " channels");
    const std::size_t plane = s[1] * s[2];
    nn::Tensor out({s[1], s[2]});
    for (std::size_t i = 0; i < plane; ++i)
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < s[0]; ++k)
            acc += alpha[k] * features[k * plane + i];
        out[i] = acc > 0.0 ? acc : 0.0;
    }
    return out;
}

nn::Tensor normalize_map(const nn::Tensor& raw)
{
    double peak = 0.0;
    for (double v : raw.data())
    {
        if (v < 0.0)
            throw ValueError("normalize_map: negative attention value");
        peak = std::max(peak, v);
    }
    nn::Tensor out(raw.shape());
    if (peak == 0.0)
        return out;
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = raw[i] == peak ? 1.0 : raw[i] / peak;
    return out;
}

nn::Tensor upsample_bilinear(const nn::Tensor& map, std::size_t height, std::size_t width)
{
    const auto& s = map.shape();
    if (s.size() != 2 || s[0] == 0 || s[1] == 0)
        throw DimensionError("upsample_bilinear: expected a nonempty HxW map, got " + nn::shape_string(s));
    if (height < s[0] || width < s[1])
        throw DimensionError("upsample_bilinear: target " + std::to_string(height) + "x" + std::to_string(width) +
                             " smaller than source " + nn::shape_string(s));
    const std::size_t h0 = s[0], w0 = s[1];

    // Source coordinate for each target index; exact at both ends.
    auto axis = [](std::size_t n_out, std::size_t n_in) {
        std::vector<std::pair<std::size_t, double>> m(n_out);
        for (std::size_t i = 0; i < n_out; ++i)
        {
            if (n_in == 1 || n_out == 1)
            {
                m[i] = {0, 0.0};
                continue;
            }
            const double pos = static_cast<double>(i * (n_in - 1)) / static_cast<double>(n_out - 1);
            std::size_t lo = static_cast<std::size_t>(pos);
            if (lo >= n_in - 1)
                lo = n_in - 2;
            m[i] = {lo, pos - static_cast<double>(lo)};
        }
        return m;
    };
    const auto ry = axis(height, h0);
    const auto rx = axis(width, w0);

    nn::Tensor out({height, width});
    for (std::size_t y = 0; y < height; ++y)
    {
        const auto [y0, fy] = ry[y];
        const std::size_t y1 = std::min(y0 + 1, h0 - 1);
        for (std::size_t x = 0; x < width; ++x)
        {
            const auto [x0, fx] = rx[x];
            const std::size_t x1 = std::min(x0 + 1, w0 - 1);
            const double a = map[y0 * w0 + x0], b = map[y0 * w0 + x1];
            const double c = map[y1 * w0 + x0], d = map[y1 * w0 + x1];
            const double top = fx == 0.0 ? a : a + fx * (b - a);
            const double bot = fx == 0.0 ? c : c + fx * (d - c);
            out[y * width + x] = fy == 0.0 ? top : top + fy * (bot - top);
        }
    }
    return out;
}

Pixel argmax(const nn::Tensor& map)
{
    const auto& s = map.shape();
    if (s.size() != 2 || map.size() == 0)
        throw DimensionError("argmax: expected a nonempty HxW map");
    std::size_t best = 0;
    for (std::size_t i = 1; i < map.size(); ++i)
        if (map[i] > map[best])
            best = i;
    return {static_cast<int>(best / s[1]), static_cast<int>(best % s[1])};
}

AttentionMap attention_from(const nn::Tensor& features, const nn::Tensor& grads, std::size_t height,
                            std::size_t width)
{
    if (features.shape() != grads.shape())
        throw DimensionError("attention: features " + nn::shape_string(features.shape()) + " vs gradients " +
                             nn::shape_string(grads.shape()));
    AttentionMap m;
    m.raw = raw_attention(features, channel_weights(grads));
    m.empty = std::all_of(m.raw.data().begin(), m.raw.data().end(), [](double v) { return v == 0.0; });
    // interpolation may miss the source peak; rescale to exactly 1
    m.normalized = normalize_map(upsample_bilinear(normalize_map(m.raw), height, width));
    m.peak = argmax(m.normalized);
    return m;
}

AttentionMap attention_for(const Image& image, std::string_view caption, const encoder::DualEncoder& model)
{
    const encoder::FeatureGradients fg = model.feature_gradients(image, caption);
    AttentionMap m = attention_from(fg.features, fg.gradients, static_cast<std::size_t>(image.height()),
                                    static_cast<std::size_t>(image.width()));
    m.similarity = fg.similarity;
    return m;
}

io::GrayImage to_gray(const AttentionMap& map)
{
    io::GrayImage g{map.width(), map.height(), {}};
    g.pixels.reserve(map.normalized.size());
    for (double v : map.normalized.data())
        g.pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
    return g;
}

}  // namespace agm::gradcam
