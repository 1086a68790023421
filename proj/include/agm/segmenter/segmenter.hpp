// segmenter.hpp
//
// M = g(I, P). The reference backend is breadth-first region growing: from
// each seed, a 4-neighbour joins when its RGB distance to the running mean of
// the region grown so far is within color_tolerance. Point prompts give the
// union of the per-seed regions; a box prompt grows from the box center and
// never leaves the box.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agm/image.hpp"
#include "agm/prompting/prompts.hpp"

namespace agm::segmenter
{

enum class Backend
{
    Reference,
    External,
};

std::string_view to_string(Backend b);
/// "reference" | "external"; throws ConfigError.
Backend parse_backend(std::string_view s);

struct SegmenterConfig
{
    Backend backend = Backend::Reference;
    double color_tolerance = 30.0;  ///< Euclidean RGB distance, 0-255 scale
    std::vector<std::string> command;  ///< external adapter argv
    int timeout_ms = 30000;

    /// Throws ConfigError.
    void validate() const;
};

/// Region grown from one seed, optionally restricted to a box.
Mask grow_region(const Image& image, prompting::Point seed, double tolerance, const prompting::Box* clip = nullptr);

/// Throws ValueError for an out-of-bounds point or an empty point list.
Mask segment_points(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg);

/// Throws ValueError for a box outside the image or with swapped corners.
Mask segment_box(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg);

/// Dispatches on the prompt kind (reference backend only).
Mask segment(const Image& image, const prompting::PromptSet& prompts, const SegmenterConfig& cfg);

}  // namespace agm::segmenter
