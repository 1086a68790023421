// synth.cpp

#include "agm/io/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "agm/error.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/rng.hpp"

namespace agm::io
{

std::string_view to_string(ShapeKind s)
{
    switch (s)
    {
    case ShapeKind::Circle:
        return "circle";
    case ShapeKind::Square:
        return "square";
    case ShapeKind::Triangle:
        return "triangle";
    }
    return "?";
}

ShapeKind parse_shape(std::string_view s)
{
    if (s == "circle")
        return ShapeKind::Circle;
    if (s == "square")
        return ShapeKind::Square;
    if (s == "triangle")
        return ShapeKind::Triangle;
    throw ConfigError("unknown shape '" + std::string(s) + "'");
}

std::string Concept::caption() const
{
    return color + " " + std::string(to_string(shape));
}

std::vector<Concept> SynthConfig::resolved_concepts() const
{
    if (!concepts.empty())
        return concepts;
    std::vector<Concept> out;
    for (const auto& c : colors)
        for (ShapeKind s : shapes)
            out.push_back({c.name, s});
    return out;
}

const NamedColor& SynthConfig::color(std::string_view name) const
{
    for (const auto& c : colors)
        if (c.name == name)
            return c;
    throw ConfigError("unknown color '" + std::string(name) + "'");
}

namespace
{

double rgb_distance(Rgb a, Rgb b)
{
    const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

// Equal-area sizing: every shape with nominal radius r covers about pi*r^2.
double square_half_side(double r)
{
    return r * std::sqrt(std::numbers::pi) / 2.0;
}

double triangle_circumradius(double r)
{
    return r * std::sqrt(4.0 * std::numbers::pi / (3.0 * std::sqrt(3.0)));
}

double bounding_radius(ShapeKind s, double r)
{
    switch (s)
    {
    case ShapeKind::Circle:
        return r;
    case ShapeKind::Square:
        return square_half_side(r) * std::numbers::sqrt2;
    case ShapeKind::Triangle:
        return triangle_circumradius(r);
    }
    return r;
}

bool inside(ShapeKind s, double px, double py, double cx, double cy, double r)
{
    const double dx = px - cx, dy = py - cy;
    switch (s)
    {
    case ShapeKind::Circle:
        return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square:
    {
        const double h = square_half_side(r);
        return std::abs(dx) <= h && std::abs(dy) <= h;
    }
    case ShapeKind::Triangle:
    {
        // Upward equilateral triangle, vertices on the circumcircle.
        const double R = triangle_circumradius(r);
        const double ax = 0.0, ay = -R;
        const double bx = R * std::sqrt(3.0) / 2.0, by = R / 2.0;
        const double cxv = -bx, cyv = R / 2.0;
        auto edge = [&](double x0, double y0, double x1, double y1) {
            return (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0);
        };
        const double e0 = edge(ax, ay, bx, by);
        const double e1 = edge(bx, by, cxv, cyv);
        const double e2 = edge(cxv, cyv, ax, ay);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
    }
    return false;
}

struct Placement
{
    Concept what;
    double cx, cy, r;
};

}  // namespace

void SynthConfig::validate() const
{
    if (width < 16 || height < 16)
        throw ConfigError("synth: image size must be at least 16x16");
    const auto cs = resolved_concepts();
    if (cs.size() < 2)
        throw ConfigError("synth: need at least 2 concepts");
    for (const auto& c : cs)
        (void)color(c.color);
    if (count_per_concept < 1)
        throw ConfigError("synth: count_per_concept must be >= 1");
    if (distractor_count < 0 || noise_amplitude < 0)
        throw ConfigError("synth: negative distractor count or noise amplitude");
    if (!(min_radius >= 2.0 && max_radius >= min_radius))
        throw ConfigError("synth: bad radius range");
    if (!(distractor_scale > 0.0 && distractor_scale <= 1.0))
        throw ConfigError("synth: distractor_scale must be in (0, 1]");
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ConfigError("synth: train_fraction must be in [0, 1]");

    // Noise must stay well below the smallest color gap (background included).
    std::vector<Rgb> palette{background};
    for (const auto& c : colors)
        palette.push_back(c.rgb);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < palette.size(); ++i)
        for (std::size_t j = i + 1; j < palette.size(); ++j)
            min_gap = std::min(min_gap, rgb_distance(palette[i], palette[j]));
    if (!(noise_amplitude < min_gap / 4.0))
        throw ConfigError("synth: noise amplitude " + std::to_string(noise_amplitude) +
                          " must be below a quarter of the minimum color distance " + std::to_string(min_gap));
    const double biggest = bounding_radius(ShapeKind::Triangle, max_radius);
    if (2.0 * biggest + 4.0 > std::min(width, height))
        throw ConfigError("synth: shapes of radius " + std::to_string(max_radius) + " do not fit the image");
}

Mask rasterize(ShapeKind shape, double cx, double cy, double r, int width, int height)
{
    Mask m(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (inside(shape, x, y, cx, cy, r))
                m.set(x, y);
    return m;
}

Split split_for(std::string_view id, std::uint64_t seed, double train_fraction)
{
    const std::uint64_t h = sample_seed(seed ^ 0x5350'4C49'54ULL, id);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < train_fraction ? Split::Train : Split::Eval;
}

SynthSample render_sample(const SynthConfig& cfg, const Concept& target, const std::string& id)
{
    SplitMix64 rng(sample_seed(cfg.seed, id));
    const auto concepts = cfg.resolved_concepts();

    std::vector<Concept> others;
    for (const auto& c : concepts)
        if (c.color != target.color)
            others.push_back(c);
    if (others.empty())
        for (const auto& c : concepts)
            if (c.color != target.color || c.shape != target.shape)
                others.push_back(c);

    std::vector<Placement> placed;
    auto place = [&](const Concept& what, double r) {
        const double br = bounding_radius(what.shape, r);
        for (int attempt = 0; attempt < 100; ++attempt)
        {
            const double cx = rng.uniform(br + 1.0, cfg.width - 2.0 - br);
            const double cy = rng.uniform(br + 1.0, cfg.height - 2.0 - br);
            bool clear = true;
            for (const auto& p : placed)
            {
                const double gap = std::hypot(cx - p.cx, cy - p.cy) - br - bounding_radius(p.what.shape, p.r);
                if (gap < 2.0)
                {
                    clear = false;
                    break;
                }
            }
            if (clear)
            {
                placed.push_back({what, cx, cy, r});
                return true;
            }
        }
        return false;
    };

    // a centered target can leave no room for distractors; redraw the scene
    bool done = false;
    for (int scene = 0; scene < 100 && !done; ++scene)
    {
        placed.clear();
        done = place(target, rng.uniform(cfg.min_radius, cfg.max_radius));
        for (int d = 0; done && d < cfg.distractor_count && !others.empty(); ++d)
        {
            const Concept& c = others[rng.below(others.size())];
            done = place(c, cfg.distractor_scale * rng.uniform(cfg.min_radius, cfg.max_radius));
        }
    }
    if (!done)
        throw ConfigError("synth: could not place shapes for '" + id + "' without overlap after 100 scenes");

    SynthSample s;
    s.id = id;
    s.target = target;
    s.split = split_for(id, cfg.seed, cfg.train_fraction);
    s.image = Image(cfg.width, cfg.height);
    const int a = cfg.noise_amplitude;
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
        {
            auto jitter = [&](std::uint8_t v) {
                const int n = a > 0 ? static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(a) + 1)) - a : 0;
                return static_cast<std::uint8_t>(std::clamp(v + n, 0, 255));
            };
            s.image.set(x, y, {jitter(cfg.background.r), jitter(cfg.background.g), jitter(cfg.background.b)});
        }
    for (std::size_t i = 0; i < placed.size(); ++i)
    {
        const auto& p = placed[i];
        const Mask shape = rasterize(p.what.shape, p.cx, p.cy, p.r, cfg.width, cfg.height);
        const Rgb rgb = cfg.color(p.what.color).rgb;
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x)
                if (shape.get(x, y))
                    s.image.set(x, y, rgb);
        if (i == 0)
            s.mask = shape;
    }
    return s;
}

std::vector<ManifestEntry> synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir)
{
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (!ec)
        std::filesystem::create_directories(out_dir / "masks", ec);
    if (ec)
        throw IoError("synth: cannot create " + out_dir.string() + ": " + ec.message());

    const auto concepts = cfg.resolved_concepts();
    std::vector<ManifestEntry> entries;
    std::string manifest;
    std::size_t index = 0;
    for (int k = 0; k < cfg.count_per_concept; ++k)
        for (const auto& c : concepts)
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "img_%05zu", index++);
            const std::string id = buf;
            const SynthSample s = render_sample(cfg, c, id);

            const std::string image_rel = "images/" + id + ".ppm";
            const std::string mask_rel = "masks/" + id + ".pgm";
            save_ppm(s.image, out_dir / image_rel);
            save_mask(s.mask, out_dir / mask_rel);

            ManifestEntry rel{id, image_rel, c.caption(), std::string(to_string(c.shape)), mask_rel, s.split};
            manifest += manifest_line(rel).dump();
            manifest += '\n';

            ManifestEntry e = rel;
            e.image_path = out_dir / image_rel;
            e.mask_path = out_dir / mask_rel;
            entries.push_back(std::move(e));
        }
    write_file(out_dir / "manifest.jsonl", manifest);
    return entries;
}

}  // namespace agm::io
