// pipeline.hpp
//
// S = score(image, caption) -> gate at theta -> attention -> prompts -> mask.
// Per-sample randomness is seeded from (global seed, sample id), so batch
// results do not depend on worker count or scheduling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agm/encoder/dual_encoder.hpp"
#include "agm/error.hpp"
#include "agm/image.hpp"
#include "agm/io/manifest.hpp"
#include "agm/pipeline/config.hpp"
#include "agm/prompting/prompts.hpp"
#include "agm/segmenter/external.hpp"
#include "json.hpp"

namespace agm::pipeline
{

struct StageTimings
{
    double score_ms = 0.0;
    double attend_ms = 0.0;
    double prompt_ms = 0.0;
    double segment_ms = 0.0;
    double total_ms = 0.0;  ///< wall time of the whole span
};

struct RunResult
{
    std::string id;
    std::string caption;
    double similarity = 0.0;
    bool present = false;
    bool no_activation = false;  ///< S passed the gate but the attention map was empty
    std::optional<prompting::PromptSet> prompts;
    std::optional<Mask> mask;
    std::optional<std::filesystem::path> mask_path;
    std::vector<std::string> warnings;
    StageTimings timings;
};

/// Comparable part of a result (everything except timings).
bool same_outcome(const RunResult& a, const RunResult& b);

/// The adapter is required when cfg.segmenter.backend is external.
/// Throws StageError; the configuration is validated by the caller.
RunResult run_pipeline(const Image& image, const std::string& caption, const std::string& id,
                       const encoder::DualEncoder& model, const PipelineConfig& cfg,
                       segmenter::AdapterProcess* adapter = nullptr);

struct BatchItem
{
    std::string id;
    std::filesystem::path image_path;
    std::string caption;
};

/// Runs every item on cfg.workers threads, each with its own adapter when the
/// backend is external. Masks are written to cfg.mask_dir/<id>.pgm when it is
/// set. Results are sorted by id.
std::vector<RunResult> run_batch(const std::vector<BatchItem>& items, const encoder::DualEncoder& model,
                                 const PipelineConfig& cfg);

/// Machine output of one run (floats rounded to 6 decimals).
nlohmann::json to_json(const RunResult& r);

struct EvalOptions
{
    std::vector<prompting::PromptMode> modes{prompting::PromptMode::Single, prompting::PromptMode::Multi,
                                             prompting::PromptMode::Box};
    bool include_timings = false;
};

/// IoU per prompt mode against the manifest masks, F1-optimal gate over the
/// best-caption scores, and top-1/top-5 caption accuracy with the distinct
/// manifest captions as candidates. Entries without a readable mask are left
/// out of the IoU tables and listed. Throws ValueError for an empty list.
nlohmann::json evaluate_masking(const std::vector<io::ManifestEntry>& entries, const encoder::DualEncoder& model,
                                const PipelineConfig& cfg, const EvalOptions& options = {});

/// Runs fn(worker, index) for index in [0, n) on `workers` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace agm::pipeline
