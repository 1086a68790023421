// prompts.cpp

#include "agm/prompting/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "agm/error.hpp"
#include "agm/rng.hpp"

namespace agm::prompting
{

std::string_view to_string(PromptKind k)
{
    switch (k)
    {
    case PromptKind::SinglePoint:
        return "single_point";
    case PromptKind::MultiplePoints:
        return "multiple_points";
    case PromptKind::BoundingBox:
        return "bounding_box";
    }
    return "?";
}

std::string_view to_string(PromptMode m)
{
    switch (m)
    {
    case PromptMode::Single:
        return "single";
    case PromptMode::Multi:
        return "multi";
    case PromptMode::Box:
        return "box";
    }
    return "?";
}

PromptMode parse_mode(std::string_view s)
{
    if (s == "single")
        return PromptMode::Single;
    if (s == "multi")
        return PromptMode::Multi;
    if (s == "box")
        return PromptMode::Box;
    throw ConfigError("unknown prompt mode '" + std::string(s) + "' (expected single, multi or box)");
}

int PromptConfig::radius_for(int width, int height) const
{
    if (sample_radius > 0)
        return sample_radius;
    return std::max(2, static_cast<int>(std::ceil(0.05 * std::max(width, height))));
}

void PromptConfig::validate() const
{
    if (!(activation_fraction > 0.0 && activation_fraction <= 1.0))
        throw ConfigError("prompting: activation_fraction must be in (0, 1]");
    if (connectivity != 4 && connectivity != 8)
        throw ConfigError("prompting: connectivity must be 4 or 8");
    if (sample_count < 1)
        throw ConfigError("prompting: sample_count must be >= 1");
    if (sample_radius < 0)
        throw ConfigError("prompting: sample_radius must be >= 1 (or 0 for automatic)");
}

Mask binarize(const nn::Tensor& values, double activation_fraction)
{
    const auto& s = values.shape();
    if (s.size() != 2)
        throw DimensionError("binarize: expected an HxW map");
    const int h = static_cast<int>(s[0]), w = static_cast<int>(s[1]);
    Mask m(w, h);
    double peak = 0.0;
    for (double v : values.data())
        peak = std::max(peak, v);
    if (peak <= 0.0)
        return m;
    const double cut = activation_fraction * peak;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (values[static_cast<std::size_t>(y) * s[1] + static_cast<std::size_t>(x)] >= cut)
                m.set(x, y);
    return m;
}

Mask binarize(const gradcam::AttentionMap& map, double activation_fraction)
{
    return binarize(map.normalized, activation_fraction);
}

std::vector<Component> components(const Mask& mask, const nn::Tensor& values, int connectivity)
{
    const int w = mask.width(), h = mask.height();
    if (values.shape() != nn::Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w)})
        throw DimensionError("components: value map does not match the mask");
    if (connectivity != 4 && connectivity != 8)
        throw ValueError("components: connectivity must be 4 or 8");
    auto value = [&](Point p) {
        return values[static_cast<std::size_t>(p.y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(p.x)];
    };

    std::vector<int> label(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1);
    std::vector<Component> out;
    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0)
        {
            if (!mask.get(x0, y0) || label[static_cast<std::size_t>(y0 * w + x0)] >= 0)
                continue;
            const int id = static_cast<int>(out.size());
            Component c;
            std::deque<Point> queue{{x0, y0}};
            label[static_cast<std::size_t>(y0 * w + x0)] = id;
            while (!queue.empty())
            {
                const Point p = queue.front();
                queue.pop_front();
                c.pixels.push_back(p);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                    {
                        if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0))
                            continue;
                        const int nx = p.x + dx, ny = p.y + dy;
                        if (!mask.contains(nx, ny) || !mask.get(nx, ny))
                            continue;
                        int& l = label[static_cast<std::size_t>(ny * w + nx)];
                        if (l < 0)
                        {
                            l = id;
                            queue.push_back({nx, ny});
                        }
                    }
            }
            std::sort(c.pixels.begin(), c.pixels.end(),
                      [](Point a, Point b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });

            c.bbox = {c.pixels[0].x, c.pixels[0].y, c.pixels[0].x, c.pixels[0].y};
            double sx = 0.0, sy = 0.0;
            c.peak = c.pixels[0];
            c.peak_value = value(c.peak);
            for (Point p : c.pixels)
            {
                sx += p.x;
                sy += p.y;
                c.bbox.x0 = std::min(c.bbox.x0, p.x);
                c.bbox.x1 = std::max(c.bbox.x1, p.x);
                c.bbox.y0 = std::min(c.bbox.y0, p.y);
                c.bbox.y1 = std::max(c.bbox.y1, p.y);
                if (value(p) > c.peak_value)
                {
                    c.peak = p;
                    c.peak_value = value(p);
                }
            }
            const double cx = sx / static_cast<double>(c.pixels.size());
            const double cy = sy / static_cast<double>(c.pixels.size());
            double best = std::numeric_limits<double>::infinity();
            for (Point p : c.pixels)
            {
                const double d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
                if (d < best)
                {
                    best = d;
                    c.centroid = p;
                }
            }
            out.push_back(std::move(c));
        }

    std::stable_sort(out.begin(), out.end(), [](const Component& a, const Component& b) {
        if (a.peak_value != b.peak_value)
            return a.peak_value > b.peak_value;
        return a.peak.y != b.peak.y ? a.peak.y < b.peak.y : a.peak.x < b.peak.x;
    });
    return out;
}

namespace
{

void require_activation(const Mask& hot)
{
    if (hot.none())
        throw NoActivationError("attention map is zero everywhere; no prompt can be placed");
}

}  // namespace

PromptSet to_point_prompts(const gradcam::AttentionMap& map, const PromptConfig& cfg)
{
    cfg.validate();
    const Mask hot = binarize(map, cfg.activation_fraction);
    require_activation(hot);
    const auto comps = components(hot, map.normalized, cfg.connectivity);

    PromptSet out;
    if (comps.size() >= 2)
    {
        out.kind = PromptKind::MultiplePoints;
        for (const auto& c : comps)
            out.points.push_back(c.centroid);
        return out;
    }

    const Component& c = comps.front();
    const int r = cfg.radius_for(map.width(), map.height());
    std::vector<Point> candidates;
    for (Point p : c.pixels)
        if (!(p == c.peak) && std::abs(p.x - c.peak.x) <= r && std::abs(p.y - c.peak.y) <= r)
            candidates.push_back(p);

    out.points.push_back(c.peak);
    if (candidates.empty())
    {
        out.kind = PromptKind::SinglePoint;
        return out;
    }
    out.kind = PromptKind::MultiplePoints;
    SplitMix64 rng(cfg.seed);
    const std::size_t take = std::min(candidates.size(), static_cast<std::size_t>(cfg.sample_count));
    for (std::size_t i = 0; i < take; ++i)
    {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
        out.points.push_back(candidates[i]);
    }
    return out;
}

PromptSet to_single_point(const gradcam::AttentionMap& map)
{
    const Mask hot = binarize(map, 1.0);
    require_activation(hot);
    return {PromptKind::SinglePoint, {{map.peak.col, map.peak.row}}, {}};
}

PromptSet to_bbox_prompt(const gradcam::AttentionMap& map, const PromptConfig& cfg)
{
    cfg.validate();
    const Mask hot = binarize(map, cfg.activation_fraction);
    require_activation(hot);
    Box b{hot.width(), hot.height(), -1, -1};
    for (int y = 0; y < hot.height(); ++y)
        for (int x = 0; x < hot.width(); ++x)
            if (hot.get(x, y))
            {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
    PromptSet out;
    out.kind = PromptKind::BoundingBox;
    out.box = b;
    return out;
}

PromptSet make_prompts(const gradcam::AttentionMap& map, PromptMode mode, const PromptConfig& cfg)
{
    switch (mode)
    {
    case PromptMode::Single:
        return to_single_point(map);
    case PromptMode::Multi:
        return to_point_prompts(map, cfg);
    case PromptMode::Box:
        return to_bbox_prompt(map, cfg);
    }
    throw ConfigError("unknown prompt mode");
}

nlohmann::json prompt_to_json(const PromptSet& p)
{
    nlohmann::json j;
    j["v"] = 1;
    if (p.kind == PromptKind::BoundingBox)
    {
        j["kind"] = "box";
        j["box"] = {p.box.x0, p.box.y0, p.box.x1, p.box.y1};
        return j;
    }
    j["kind"] = "points";
    j["points"] = nlohmann::json::array();
    for (Point q : p.points)
        j["points"].push_back({q.x, q.y});
    return j;
}

PromptSet prompt_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ProtocolError("prompt: expected a JSON object");
    if (!j.contains("v") || !j["v"].is_number_integer())
        throw ProtocolError("prompt: missing integer field 'v'");
    if (j["v"].get<int>() != 1)
        throw VersionError("prompt: unsupported version " + j["v"].dump());
    auto coord = [](const nlohmann::json& v) {
        if (!v.is_number_integer())
            throw ProtocolError("prompt: coordinates must be integers");
        return v.get<int>();
    };
    const std::string kind = j.value("kind", std::string{});
    PromptSet p;
    if (kind == "box")
    {
        const auto it = j.find("box");
        if (it == j.end() || !it->is_array() || it->size() != 4)
            throw ProtocolError("prompt: box must be [x0,y0,x1,y1]");
        p.kind = PromptKind::BoundingBox;
        const auto& b = *it;
        p.box = {coord(b[0]), coord(b[1]), coord(b[2]), coord(b[3])};
        if (p.box.x0 > p.box.x1 || p.box.y0 > p.box.y1)
            throw ProtocolError("prompt: box corners out of order");
        return p;
    }
    if (kind != "points")
        throw ProtocolError("prompt: kind must be 'points' or 'box'");
    const auto it = j.find("points");
    if (it == j.end() || !it->is_array() || it->empty())
        throw ProtocolError("prompt: points must be a nonempty array");
    for (const auto& q : *it)
    {
        if (!q.is_array() || q.size() != 2)
            throw ProtocolError("prompt: each point must be [x,y]");
        p.points.push_back({coord(q[0]), coord(q[1])});
    }
    p.kind = p.points.size() == 1 ? PromptKind::SinglePoint : PromptKind::MultiplePoints;
    return p;
}

}  // namespace agm::prompting
