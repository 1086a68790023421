// synth.hpp
//
// Synthetic "<color> <shape>" dataset: one flat-colored target shape per
// image on a noisy gray background, plus smaller non-overlapping distractors
// of other concepts. Ground-truth masks are the exact target raster.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "agm/image.hpp"
#include "agm/io/manifest.hpp"

namespace agm::io
{

enum class ShapeKind
{
    Circle,
    Square,
    Triangle,
};

std::string_view to_string(ShapeKind s);
ShapeKind parse_shape(std::string_view s);

struct NamedColor
{
    std::string name;
    Rgb rgb;
};

struct Concept
{
    std::string color;
    ShapeKind shape = ShapeKind::Circle;

    std::string caption() const;
};

struct SynthConfig
{
    int width = 64;
    int height = 64;
    std::vector<ShapeKind> shapes{ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle};
    std::vector<NamedColor> colors{
        {"red", {220, 50, 50}},
        {"green", {50, 180, 70}},
        {"blue", {50, 80, 220}},
        {"yellow", {230, 210, 50}},
    };
    /// Explicit concept list; empty means every color x shape pair.
    std::vector<Concept> concepts;
    int distractor_count = 1;
    int noise_amplitude = 8;  ///< background noise, +-amplitude per channel
    int count_per_concept = 25;
    double min_radius = 9.0;
    double max_radius = 13.0;
    double distractor_scale = 0.5;
    Rgb background{128, 128, 128};
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    /// Resolved concept list (explicit or full product).
    std::vector<Concept> resolved_concepts() const;
    const NamedColor& color(std::string_view name) const;

    /// Throws ConfigError for a degenerate configuration.
    void validate() const;
};

/// Exact raster of a shape centered at (cx, cy) with nominal radius r.
Mask rasterize(ShapeKind shape, double cx, double cy, double r, int width, int height);

struct SynthSample
{
    std::string id;
    Concept target;
    Image image;
    Mask mask;
    Split split = Split::Train;
};

/// Deterministic in (cfg, id); independent of generation order.
SynthSample render_sample(const SynthConfig& cfg, const Concept& target, const std::string& id);

/// Split depends only on (id, seed).
Split split_for(std::string_view id, std::uint64_t seed, double train_fraction);

/// Writes images/<id>.ppm, masks/<id>.pgm and manifest.jsonl under out_dir.
/// Returns the entries in manifest order (paths as resolved on disk).
std::vector<ManifestEntry> synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace agm::io
