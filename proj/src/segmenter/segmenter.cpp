// segmenter.cpp

#include "agm/segmenter/segmenter.hpp"

#include <cmath>
#include <deque>

#include "agm/error.hpp"

namespace agm::segmenter
{

std::string_view to_string(Backend b)
{
    return b == Backend::Reference ? "reference" : "external";
}

Backend parse_backend(std::string_view s)
{
    if (s == "reference")
        return Backend::Reference;
    if (s == "external")
        return Backend::External;
    throw ConfigError("unknown segmenter backend '" + std::string(s) + "' (expected reference or external)");
}

void SegmenterConfig::validate() const
{
    if (!(color_tolerance >= 0.0) || !std::isfinite(color_tolerance))
        throw ConfigError("segmenter: color_tolerance must be a finite value >= 0");
    if (backend == Backend::External)
    {
        if (command.empty())
            throw ConfigError("segmenter: external backend needs a command");
        if (timeout_ms <= 0)
            throw ConfigError("segmenter: timeout_ms must be > 0");
    }
}

Mask grow_region(const Image& image, prompting::Point seed, double tolerance, const prompting::Box* clip)
{
    if (!image.contains(seed.x, seed.y) || (clip && !clip->contains(seed)))
        throw ValueError("segment: seed (" + std::to_string(seed.x) + ", " + std::to_string(seed.y) +
                         ") outside the image");
    const double tol2 = tolerance * tolerance;
    Mask region(image.width(), image.height());
    double sum[3] = {0, 0, 0};
    std::size_t count = 0;
    auto join = [&](int x, int y) {
        const Rgb c = image.at(x, y);
        region.set(x, y);
        sum[0] += c.r;
        sum[1] += c.g;
        sum[2] += c.b;
        ++count;
    };

    std::deque<prompting::Point> queue{seed};
    join(seed.x, seed.y);
    constexpr int kDx[4] = {0, -1, 1, 0};
    constexpr int kDy[4] = {-1, 0, 0, 1};
    while (!queue.empty())
    {
        const prompting::Point p = queue.front();
        queue.pop_front();
        for (int d = 0; d < 4; ++d)
        {
            const int nx = p.x + kDx[d], ny = p.y + kDy[d];
            if (!image.contains(nx, ny) || region.get(nx, ny))
                continue;
            if (clip && !clip->contains({nx, ny}))
                continue;
            const Rgb c = image.at(nx, ny);
            const double n = static_cast<double>(count);
            const double dr = c.r - sum[0] / n, dg = c.g - sum[1] / n, db = c.b - sum[2] / n;
            if (dr * dr + dg * dg + db * db <= tol2)
            {
                join(nx, ny);
                queue.push_back({nx, ny});
            }
        }
    }
    return region;
}

Mask segment_points(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg)
{
    if (prompts.kind == prompting::PromptKind::BoundingBox)
        throw ValueError("segment_points: got a box prompt");
    if (prompts.points.empty())
        throw ValueError("segment_points: no points");
    Mask out(image.width(), image.height());
    for (const auto& p : prompts.points)
        out |= grow_region(image, p, cfg.color_tolerance);
    return out;
}

Mask segment_box(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg)
{
    if (prompts.kind != prompting::PromptKind::BoundingBox)
        throw ValueError("segment_box: got a point prompt");
    const auto& b = prompts.box;
    if (b.x0 > b.x1 || b.y0 > b.y1 || !image.contains(b.x0, b.y0) || !image.contains(b.x1, b.y1))
        throw ValueError("segment_box: box (" + std::to_string(b.x0) + ", " + std::to_string(b.y0) + ", " +
                         std::to_string(b.x1) + ", " + std::to_string(b.y1) + ") is not inside the image");
    const prompting::Point center{(b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2};
    return grow_region(image, center, cfg.color_tolerance, &b);
}

Mask segment(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg)
{
    return prompts.kind == prompting::PromptKind::BoundingBox ? segment_box(image, prompts, cfg)
                                                              : segment_points(image, prompts, cfg);
}

}  // namespace agm::segmenter
