// config.hpp
//
// TOML configuration. Sections and keys:
//
//   [pipeline]   checkpoint, gate, gate_first, mode, workers, seed, mask_dir
//   [prompting]  activation_fraction, connectivity, sample_count, sample_radius
//   [segmenter]  backend, color_tolerance, command, timeout_ms
//   [train]      epochs, batch_size, learning_rate, beta1, beta2, eps,
//                weight_decay, temperature, seed, drop_incomplete,
//                conv1_stride, hidden_channels, feature_channels, embed_dim,
//                token_dim
//   [synth]      width, height, shapes, colors, concepts, distractor_count,
//                noise_amplitude, count_per_concept, min_radius, max_radius,
//                distractor_scale, background, train_fraction, seed
//
// Overrides are "section.key=value" with a TOML value; anything that does not
// parse as one is taken as a string.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agm/encoder/trainer.hpp"
#include "agm/io/synth.hpp"
#include "agm/prompting/prompts.hpp"
#include "agm/segmenter/segmenter.hpp"

namespace agm::pipeline
{

inline constexpr double kDefaultGate = 0.489;

struct PipelineConfig
{
    std::filesystem::path checkpoint;
    double gate = kDefaultGate;
    bool gate_first = true;  ///< skip attention when S < gate
    prompting::PromptMode mode = prompting::PromptMode::Multi;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    std::filesystem::path mask_dir;  ///< empty: masks are not written

    prompting::PromptConfig prompting;
    segmenter::SegmenterConfig segmenter;
    encoder::TrainConfig train;
    io::SynthConfig synth;

    /// Throws ConfigError.
    void validate() const;
};

/// Defaults, then the file (if any), then the overrides in order.
/// Throws ConfigError for unreadable files, syntax errors, unknown keys and
/// values of the wrong type or out of range.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides = {});

PipelineConfig parse_config(std::string_view toml_text, const std::vector<std::string>& overrides = {});

}  // namespace agm::pipeline
