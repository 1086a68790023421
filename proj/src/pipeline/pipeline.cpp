// pipeline.cpp

#include "agm/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <memory>
#include <set>
#include <thread>

#include "agm/error.hpp"
#include "agm/eval/metrics.hpp"
#include "agm/gradcam/gradcam.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/rng.hpp"
#include "agm/segmenter/segmenter.hpp"

namespace agm::pipeline
{

namespace
{

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b)
{
    return std::chrono::duration<double, std::milli>(b - a).count();
}

template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f())
{
    try
    {
        return f();
    }
    catch (const NoActivationError&)
    {
        throw;
    }
    catch (const StageError&)
    {
        throw;
    }
    catch (const Error& e)
    {
        throw StageError(stage, e.what());
    }
}

std::string_view kind_name(prompting::PromptMode m)
{
    switch (m)
    {
    case prompting::PromptMode::Single:
        return "single_point";
    case prompting::PromptMode::Multi:
        return "multiple_points";
    case prompting::PromptMode::Box:
        return "bounding_box";
    }
    return "?";
}

std::unique_ptr<segmenter::AdapterProcess> adapter_for(const PipelineConfig& cfg)
{
    if (cfg.segmenter.backend != segmenter::Backend::External)
        return nullptr;
    return std::make_unique<segmenter::AdapterProcess>(cfg.segmenter.command, cfg.segmenter.timeout_ms);
}

}  // namespace

bool same_outcome(const RunResult& a, const RunResult& b)
{
    return a.id == b.id && a.caption == b.caption && a.similarity == b.similarity && a.present == b.present &&
           a.no_activation == b.no_activation && a.prompts == b.prompts && a.mask == b.mask &&
           a.mask_path == b.mask_path && a.warnings == b.warnings;
}

RunResult run_pipeline(const Image& image, const std::string& caption, const std::string& id,
                       const encoder::DualEncoder& model, const PipelineConfig& cfg, segmenter::AdapterProcess* adapter)
{
    RunResult r;
    r.id = id;
    r.caption = caption;

    const auto t0 = Clock::now();
    r.similarity = in_stage("score", [&] { return model.score(image, caption).value; });
    const auto t1 = Clock::now();
    r.timings.score_ms = ms_between(t0, t1);
    r.present = r.similarity >= cfg.gate;
    if (!r.present && cfg.gate_first)
    {
        r.timings.total_ms = ms_between(t0, Clock::now());
        return r;
    }

    const gradcam::AttentionMap map = in_stage("attend", [&] { return gradcam::attention_for(image, caption, model); });
    const auto t2 = Clock::now();
    r.timings.attend_ms = ms_between(t1, t2);

    prompting::PromptConfig pc = cfg.prompting;
    pc.seed = sample_seed(cfg.seed, id);
    std::optional<prompting::PromptSet> prompts;
    try
    {
        prompts = in_stage("prompt", [&] { return prompting::make_prompts(map, cfg.mode, pc); });
    }
    catch (const NoActivationError&)
    {
        r.no_activation = true;
        r.warnings.push_back("attention map is zero everywhere; object treated as absent");
    }
    const auto t3 = Clock::now();
    r.timings.prompt_ms = ms_between(t2, t3);
    if (!r.present || r.no_activation)
    {
        r.present = false;
        r.timings.total_ms = ms_between(t0, t3);
        return r;
    }
    r.prompts = prompts;

    r.mask = in_stage("segment", [&] {
        if (cfg.segmenter.backend == segmenter::Backend::External)
        {
            if (!adapter)
                throw AdapterSpawnError("external backend selected but no adapter process is running");
            return segmenter::segment_external(*adapter, image, *r.prompts, id);
        }
        return segmenter::segment(image, *r.prompts, cfg.segmenter);
    });
    const auto t4 = Clock::now();
    r.timings.segment_ms = ms_between(t3, t4);
    r.timings.total_ms = ms_between(t0, t4);
    return r;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto body = [&](std::size_t w) {
        for (std::size_t i = next++; i < n && !failed; i = next++)
        {
            try
            {
                fn(w, i);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
                failed = true;
            }
        }
    };
    if (workers == 1)
        body(0);
    else
    {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(body, w);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

std::vector<RunResult> run_batch(const std::vector<BatchItem>& items, const encoder::DualEncoder& model,
                                 const PipelineConfig& cfg)
{
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, items.size()));
    std::vector<std::unique_ptr<segmenter::AdapterProcess>> adapters(workers);
    for (auto& a : adapters)
        a = in_stage("segment", [&] { return adapter_for(cfg); });
    if (!cfg.mask_dir.empty())
        std::filesystem::create_directories(cfg.mask_dir);

    std::vector<RunResult> out(items.size());
    parallel_for(items.size(), workers, [&](std::size_t w, std::size_t i) {
        const BatchItem& it = items[i];
        const Image img = in_stage("load", [&] { return io::load_ppm(it.image_path); });
        RunResult r = run_pipeline(img, it.caption, it.id, model, cfg, adapters[w].get());
        if (r.mask && !cfg.mask_dir.empty())
        {
            const auto path = cfg.mask_dir / (it.id + ".pgm");
            in_stage("write", [&] {
                io::save_pgm(io::mask_to_gray(*r.mask), path);
                return 0;
            });
            r.mask_path = path;
        }
        out[i] = std::move(r);
    });
    std::sort(out.begin(), out.end(), [](const RunResult& a, const RunResult& b) { return a.id < b.id; });
    return out;
}

nlohmann::json to_json(const RunResult& r)
{
    using eval::round6;
    nlohmann::json j;
    j["id"] = r.id;
    j["caption"] = r.caption;
    j["similarity"] = round6(r.similarity);
    j["present"] = r.present;
    j["no_activation"] = r.no_activation;
    j["prompts"] = r.prompts ? prompting::prompt_to_json(*r.prompts) : nlohmann::json(nullptr);
    if (r.prompts)
        j["prompt_kind"] = prompting::to_string(r.prompts->kind);
    else
        j["prompt_kind"] = nullptr;
    j["mask"] = r.mask_path ? nlohmann::json(r.mask_path->string()) : nlohmann::json(nullptr);
    j["mask_pixels"] = r.mask ? nlohmann::json(r.mask->popcount()) : nlohmann::json(nullptr);
    j["warnings"] = r.warnings;
    j["timings_ms"] = {{"score", round6(r.timings.score_ms)},     {"attend", round6(r.timings.attend_ms)},
                       {"prompt", round6(r.timings.prompt_ms)},   {"segment", round6(r.timings.segment_ms)},
                       {"total", round6(r.timings.total_ms)}};
    return j;
}

nlohmann::json evaluate_masking(const std::vector<io::ManifestEntry>& entries, const encoder::DualEncoder& model,
                                const PipelineConfig& cfg, const EvalOptions& options)
{
    if (entries.empty())
        throw ValueError("evaluate: no samples");
    if (options.modes.empty())
        throw ValueError("evaluate: no prompt modes");

    std::set<std::string> unique_captions;
    for (const auto& e : entries)
        unique_captions.insert(e.caption);
    const std::vector<std::string> captions(unique_captions.begin(), unique_captions.end());

    struct Row
    {
        std::vector<double> scores;
        std::size_t label = 0;
        eval::ScoredSample scored;
        bool has_mask = false;
        std::vector<double> iou;  // per mode
        std::vector<std::string> warnings;
    };
    std::vector<Row> rows(entries.size());

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, entries.size()));
    std::vector<std::unique_ptr<segmenter::AdapterProcess>> adapters(workers);
    for (auto& a : adapters)
        a = in_stage("segment", [&] { return adapter_for(cfg); });

    parallel_for(entries.size(), workers, [&](std::size_t w, std::size_t i) {
        const auto& e = entries[i];
        Row& row = rows[i];
        const Image img = in_stage("load", [&] { return io::load_ppm(e.image_path); });
        for (std::size_t c = 0; c < captions.size(); ++c)
        {
            row.scores.push_back(in_stage("score", [&] { return model.score(img, captions[c]).value; }));
            if (captions[c] == e.caption)
                row.label = c;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < captions.size(); ++c)
            if (row.scores[c] > row.scores[best])
                best = c;
        row.scored = {e.id, row.scores[best], best == row.label};

        std::optional<Mask> truth;
        if (e.mask_path)
        {
            try
            {
                truth = io::load_mask(*e.mask_path);
            }
            catch (const Error& err)
            {
                row.warnings.push_back(err.what());
            }
        }
        row.has_mask = truth.has_value();
        if (!truth)
            return;
        for (auto mode : options.modes)
        {
            PipelineConfig mc = cfg;
            mc.mode = mode;
            const RunResult r = run_pipeline(img, e.caption, e.id, model, mc, adapters[w].get());
            const Mask pred = r.mask ? *r.mask : Mask(truth->width(), truth->height());
            row.iou.push_back(in_stage("evaluate", [&] { return eval::iou(pred, *truth); }));
        }
    });

    // order-independent aggregation, then a deterministic sort by id
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entries[a].id < entries[b].id; });

    nlohmann::json per_sample = nlohmann::json::array();
    std::vector<double> sums(options.modes.size(), 0.0);
    std::size_t with_mask = 0;
    nlohmann::json missing = nlohmann::json::array();
    nlohmann::json warnings = nlohmann::json::array();
    std::vector<eval::ScoredSample> scored;
    nn::Tensor score_matrix({entries.size(), captions.size()});
    std::vector<std::size_t> labels;
    for (std::size_t k = 0; k < order.size(); ++k)
    {
        const std::size_t i = order[k];
        const Row& row = rows[i];
        scored.push_back(row.scored);
        labels.push_back(row.label);
        for (std::size_t c = 0; c < captions.size(); ++c)
            score_matrix[k * captions.size() + c] = row.scores[c];
        for (const auto& w : row.warnings)
            warnings.push_back(entries[i].id + ": " + w);
        if (!row.has_mask)
        {
            missing.push_back(entries[i].id);
            continue;
        }
        ++with_mask;
        for (std::size_t m = 0; m < options.modes.size(); ++m)
        {
            sums[m] += row.iou[m];
            per_sample.push_back(
                {{"id", entries[i].id}, {"prompt_kind", kind_name(options.modes[m])}, {"iou", eval::round6(row.iou[m])}});
        }
    }

    nlohmann::json mean = nlohmann::json::object();
    for (std::size_t m = 0; m < options.modes.size(); ++m)
        mean[std::string(kind_name(options.modes[m]))] =
            with_mask ? nlohmann::json(eval::round6(sums[m] / static_cast<double>(with_mask))) : nlohmann::json(nullptr);

    nlohmann::json report;
    report["per_sample"] = per_sample;
    report["mean_iou_by_kind"] = mean;
    report["threshold_report"] = eval::to_json(eval::optimal_threshold(scored));
    report["accuracy"] = {{"top1", eval::round6(eval::topk_accuracy(score_matrix, labels, 1))},
                          {"top5", eval::round6(eval::topk_accuracy(score_matrix, labels, 5))}};
    report["samples"] = entries.size();
    report["missing_masks"] = {{"count", missing.size()}, {"ids", missing}};
    report["warnings"] = warnings;
    report["gate"] = eval::round6(cfg.gate);
    return report;
}

}  // namespace agm::pipeline
