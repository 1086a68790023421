// oracles.hpp
//
// Deliberately naive reimplementations used to check the library. Shared by
// the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "agm/eval/metrics.hpp"
#include "agm/image.hpp"
#include "agm/nn/tensor.hpp"
#include "agm/rng.hpp"

namespace agm::test
{

struct OracleRegion
{
    std::vector<std::pair<int, int>> pixels;  // (x, y)
    int peak_x = 0, peak_y = 0;
    double peak_value = -1.0;
    int centroid_x = 0, centroid_y = 0;
};

inline std::vector<bool> oracle_hot(const nn::Tensor& values, double tau)
{
    double mx = 0.0;
    for (double v : values.data())
        mx = std::max(mx, v);
    std::vector<bool> hot(values.size(), false);
    if (mx <= 0.0)
        return hot;
    for (std::size_t i = 0; i < values.size(); ++i)
        hot[i] = values[i] >= tau * mx;
    return hot;
}

// union-find labeling, then regions sorted by peak value desc, row, col
inline std::vector<OracleRegion> oracle_regions(const nn::Tensor& values, double tau, int connectivity)
{
    const int h = static_cast<int>(values.shape()[0]), w = static_cast<int>(values.shape()[1]);
    const auto hot = oracle_hot(values, tau);
    std::vector<int> parent(hot.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
        {
            if (!hot[y * w + x])
                continue;
            for (int y2 = 0; y2 < h; ++y2)
                for (int x2 = 0; x2 < w; ++x2)
                {
                    const int dx = std::abs(x2 - x), dy = std::abs(y2 - y);
                    const bool adj = connectivity == 8 ? std::max(dx, dy) == 1 : dx + dy == 1;
                    if (adj && hot[y2 * w + x2])
                        parent[find(y * w + x)] = find(y2 * w + x2);
                }
        }
    std::map<int, OracleRegion> by_root;
    for (int i = 0; i < h * w; ++i)
        if (hot[i])
        {
            auto& r = by_root[find(i)];
            r.pixels.push_back({i % w, i / w});
            if (values[i] > r.peak_value)
            {
                r.peak_value = values[i];
                r.peak_x = i % w;
                r.peak_y = i / w;
            }
        }
    std::vector<OracleRegion> out;
    for (auto& [root, r] : by_root)
    {
        double cx = 0, cy = 0;
        for (auto [x, y] : r.pixels)
        {
            cx += x;
            cy += y;
        }
        cx /= static_cast<double>(r.pixels.size());
        cy /= static_cast<double>(r.pixels.size());
        double best = 1e300;
        for (auto [x, y] : r.pixels)
        {
            const double d = std::hypot(x - cx, y - cy);
            if (d < best)
            {
                best = d;
                r.centroid_x = x;
                r.centroid_y = y;
            }
        }
        out.push_back(r);
    }
    std::sort(out.begin(), out.end(), [](const OracleRegion& a, const OracleRegion& b) {
        if (a.peak_value != b.peak_value)
            return a.peak_value > b.peak_value;
        if (a.peak_y != b.peak_y)
            return a.peak_y < b.peak_y;
        return a.peak_x < b.peak_x;
    });
    return out;
}

/// Smooth random map: a few Gaussian bumps, then scaled to max 1.
inline nn::Tensor random_blob_map(int h, int w, int bumps, SplitMix64& rng)
{
    nn::Tensor m({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (int b = 0; b < bumps; ++b)
    {
        const double cx = rng.uniform(0, w - 1), cy = rng.uniform(0, h - 1);
        const double s = rng.uniform(1.0, 4.0), a = rng.uniform(0.5, 1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                m[static_cast<std::size_t>(y * w + x)] +=
                    a * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
    }
    double mx = 0;
    for (double v : m.data())
        mx = std::max(mx, v);
    for (auto& v : m.data())
        v /= mx;
    return m;
}

inline double oracle_iou(const Mask& a, const Mask& b)
{
    long inter = 0, uni = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
        {
            inter += a.get(x, y) && b.get(x, y);
            uni += a.get(x, y) || b.get(x, y);
        }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double oracle_f1(const std::vector<eval::ScoredSample>& s, double theta)
{
    double tp = 0, fp = 0, fn = 0;
    for (const auto& x : s)
    {
        if (x.score >= theta)
            (x.correct ? tp : fp) += 1;
        else if (x.correct)
            fn += 1;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

/// Best F1 over `points` evenly spaced thresholds covering [lo, hi].
inline double dense_grid_f1(const std::vector<eval::ScoredSample>& s, double lo, double hi, int points)
{
    double best = 0.0;
    for (int i = 0; i < points; ++i)
        best = std::max(best, oracle_f1(s, lo + (hi - lo) * i / (points - 1)));
    return best;
}

}  // namespace agm::test
