// prompts.hpp
//
// Attention map -> segmentation prompts. "Hot" pixels are those at or above
// activation_fraction * max(A). Several hot regions become one point each
// (their centroids); a single region becomes its peak plus a few seeded
// samples from a Chebyshev ball around it. The box mode takes the tight
// bounding box of all hot pixels.
//
// Coordinates are (x = col, y = row), origin top-left.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "agm/gradcam/gradcam.hpp"
#include "agm/image.hpp"
#include "json.hpp"

namespace agm::prompting
{

struct Point
{
    int x = 0;
    int y = 0;

    friend bool operator==(const Point&, const Point&) = default;
    friend auto operator<=>(const Point&, const Point&) = default;
};

struct Box
{
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  ///< inclusive

    bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
    friend bool operator==(const Box&, const Box&) = default;
};

enum class PromptKind
{
    SinglePoint,
    MultiplePoints,
    BoundingBox,
};

std::string_view to_string(PromptKind k);

struct PromptSet
{
    PromptKind kind = PromptKind::SinglePoint;
    std::vector<Point> points;
    Box box;

    friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

struct PromptConfig
{
    double activation_fraction = 0.8;
    int connectivity = 8;
    int sample_count = 3;
    int sample_radius = 0;  ///< 0: max(2, ceil(0.05 * max(H, W)))
    std::uint64_t seed = 0;

    int radius_for(int width, int height) const;
    /// Throws ConfigError.
    void validate() const;
};

struct Component
{
    std::vector<Point> pixels;  ///< row-major order
    Point centroid;             ///< mean position snapped to the nearest member
    Point peak;
    double peak_value = 0.0;
    Box bbox;
};

/// H x W values -> hot mask. Empty when the map is zero everywhere.
Mask binarize(const nn::Tensor& values, double activation_fraction);
Mask binarize(const gradcam::AttentionMap& map, double activation_fraction);

/// Connected regions of mask, strongest peak first (ties: smaller row, then col).
/// values supplies the activation used for peaks and ordering.
std::vector<Component> components(const Mask& mask, const nn::Tensor& values, int connectivity);

/// Throws NoActivationError for an all-zero map.
PromptSet to_point_prompts(const gradcam::AttentionMap& map, const PromptConfig& cfg);
PromptSet to_single_point(const gradcam::AttentionMap& map);
PromptSet to_bbox_prompt(const gradcam::AttentionMap& map, const PromptConfig& cfg);

enum class PromptMode
{
    Single,
    Multi,
    Box,
};

std::string_view to_string(PromptMode m);
/// "single" | "multi" | "box"; throws ConfigError.
PromptMode parse_mode(std::string_view s);

PromptSet make_prompts(const gradcam::AttentionMap& map, PromptMode mode, const PromptConfig& cfg);

/// {"v":1,"kind":"points","points":[[x,y],...]} or {"v":1,"kind":"box","box":[x0,y0,x1,y1]}.
nlohmann::json prompt_to_json(const PromptSet& p);
/// Throws VersionError for v != 1 and ProtocolError for any other shape problem.
PromptSet prompt_from_json(const nlohmann::json& j);

}  // namespace agm::prompting
