// agm_main.cpp
//
// agm <subcommand> [options]. JSON on stdout, logs on stderr.
// Exit codes: 0 ok, 1 usage or configuration error, 2 object absent (run),
// 3 runtime failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agm/encoder/trainer.hpp"
#include "agm/error.hpp"
#include "agm/eval/metrics.hpp"
#include "agm/gradcam/gradcam.hpp"
#include "agm/io/manifest.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/io/synth.hpp"
#include "agm/pipeline/config.hpp"
#include "agm/pipeline/pipeline.hpp"
#include "agm/segmenter/external.hpp"
#include "agm/segmenter/segmenter.hpp"

using namespace agm;
using nlohmann::json;

namespace
{

enum Exit
{
    kOk = 0,
    kUsage = 1,
    kAbsent = 2,
    kRuntime = 3,
};

// usage problems found after parsing (bad flag combinations)
class UsageError : public Error
{
public:
    using Error::Error;
};

struct Globals
{
    std::optional<std::string> config;
    std::vector<std::string> overrides;
    bool quiet = false;
};

Globals g;

void log(const std::string& msg)
{
    if (!g.quiet)
        std::cerr << "agm: " << msg << '\n';
}

void emit(const json& j)
{
    std::cout << j.dump(2) << '\n';
}

pipeline::PipelineConfig config(std::vector<std::string> extra = {})
{
    std::vector<std::string> all = g.overrides;
    all.insert(all.end(), extra.begin(), extra.end());
    std::optional<std::filesystem::path> file;
    if (g.config)
        file = *g.config;
    return pipeline::load_config(file, all);
}

encoder::DualEncoder load_model(const pipeline::PipelineConfig& cfg)
{
    if (cfg.checkpoint.empty())
        throw UsageError("no checkpoint: pass --checkpoint or set pipeline.checkpoint");
    return encoder::DualEncoder::load(cfg.checkpoint);
}

std::vector<io::ManifestEntry> select_split(const std::vector<io::ManifestEntry>& all, const std::string& split)
{
    if (split == "all")
        return all;
    const io::Split want = io::parse_split(split);
    std::vector<io::ManifestEntry> out;
    for (const auto& e : all)
        if (e.split == want)
            out.push_back(e);
    return out;
}

json read_json_arg(const std::string& arg)
{
    std::string text = arg;
    if (!arg.empty() && arg[0] == '@')
        text = io::read_file(arg.substr(1));
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw UsageError("not valid JSON: " + arg);
    return j;
}

std::vector<eval::ScoredSample> read_scores(const std::string& path)
{
    const json j = read_json_arg("@" + path);
    if (!j.is_array())
        throw FormatError(path + ": expected an array of {id, score, correct}");
    std::vector<eval::ScoredSample> out;
    for (const auto& e : j)
    {
        if (!e.is_object() || !e.contains("score") || !e["score"].is_number() || !e.contains("correct") ||
            !e["correct"].is_boolean())
            throw FormatError(path + ": every entry needs a numeric score and a boolean correct");
        out.push_back({e.value("id", std::string{}), e["score"].get<double>(), e["correct"].get<bool>()});
    }
    return out;
}

// --- subcommands ------------------------------------------------------------

struct SynthArgs
{
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a)
{
    std::vector<std::string> extra;
    if (a.seed)
        extra.push_back("synth.seed=" + std::to_string(*a.seed));
    const auto cfg = config(extra);
    const auto entries = io::synth_generate(cfg.synth, a.out);
    std::size_t train = 0;
    for (const auto& e : entries)
        train += e.split == io::Split::Train;
    log("wrote " + std::to_string(entries.size()) + " samples to " + a.out);
    emit({{"manifest", (std::filesystem::path(a.out) / "manifest.jsonl").string()},
          {"samples", entries.size()},
          {"train", train},
          {"eval", entries.size() - train}});
    return kOk;
}

struct TrainArgs
{
    std::string manifest;
    std::string out;
    std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a)
{
    std::vector<std::string> extra;
    if (a.epochs)
        extra.push_back("train.epochs=" + std::to_string(*a.epochs));
    const auto cfg = config(extra);
    const std::filesystem::path out = a.out.empty() ? cfg.checkpoint : std::filesystem::path(a.out);
    if (out.empty())
        throw UsageError("train: no output path (--out or pipeline.checkpoint)");
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = encoder::train_from_manifest(a.manifest, cfg.train, out, [](std::size_t e, double loss) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f", e, loss);
        log(buf);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json losses = json::array();
    for (double l : r.epoch_loss)
        losses.push_back(eval::round6(l));
    emit({{"checkpoint", out.string()}, {"epochs", cfg.train.epochs}, {"epoch_loss", losses}, {"seconds", eval::round6(secs)}});
    return kOk;
}

struct ImageArgs
{
    std::string image;
    std::string caption;
    std::string checkpoint;
    std::string out;
    std::string mode;
    std::string id;
};

std::vector<std::string> image_overrides(const ImageArgs& a)
{
    std::vector<std::string> extra;
    if (!a.checkpoint.empty())
        extra.push_back("pipeline.checkpoint=\"" + a.checkpoint + "\"");
    if (!a.mode.empty())
        extra.push_back("pipeline.mode=\"" + a.mode + "\"");
    return extra;
}

int cmd_score(const ImageArgs& a)
{
    const auto cfg = config(image_overrides(a));
    const auto model = load_model(cfg);
    const double s = model.score(io::load_ppm(a.image), a.caption).value;
    emit({{"caption", a.caption}, {"similarity", eval::round6(s)}, {"gate", eval::round6(cfg.gate)}, {"present", s >= cfg.gate}});
    return kOk;
}

int cmd_attend(const ImageArgs& a)
{
    const auto cfg = config(image_overrides(a));
    const auto model = load_model(cfg);
    const auto map = gradcam::attention_for(io::load_ppm(a.image), a.caption, model);
    io::save_pgm(gradcam::to_gray(map), a.out);
    if (map.empty)
        log("attention map is zero everywhere");
    emit({{"attention", a.out},
          {"similarity", eval::round6(map.similarity)},
          {"peak", {map.peak.col, map.peak.row}},
          {"empty", map.empty}});
    return kOk;
}

int cmd_prompt(const ImageArgs& a)
{
    const auto cfg = config(image_overrides(a));
    const auto model = load_model(cfg);
    const auto map = gradcam::attention_for(io::load_ppm(a.image), a.caption, model);
    prompting::PromptConfig pc = cfg.prompting;
    pc.seed = sample_seed(cfg.seed, a.id);
    const auto p = prompting::make_prompts(map, cfg.mode, pc);
    json j = prompting::prompt_to_json(p);
    j["prompt_kind"] = prompting::to_string(p.kind);
    emit(j);
    return kOk;
}

struct MaskArgs
{
    std::string image;
    std::string prompts;
    std::string out;
};

int cmd_mask(const MaskArgs& a)
{
    const auto cfg = config();
    const Image img = io::load_ppm(a.image);
    const auto p = prompting::prompt_from_json(read_json_arg(a.prompts));
    Mask m;
    if (cfg.segmenter.backend == segmenter::Backend::External)
    {
        segmenter::AdapterProcess adapter(cfg.segmenter.command, cfg.segmenter.timeout_ms);
        m = segmenter::segment_external(adapter, img, p, "mask");
    }
    else
        m = segmenter::segment(img, p, cfg.segmenter);
    io::save_pgm(io::mask_to_gray(m), a.out);
    emit({{"mask", a.out}, {"mask_pixels", m.popcount()}});
    return kOk;
}

struct RunArgs
{
    ImageArgs one;
    std::string manifest;
    std::string split = "eval";
    std::string mask_dir;
    std::optional<std::size_t> workers;
};

int cmd_run(const RunArgs& a)
{
    std::vector<std::string> extra = image_overrides(a.one);
    if (!a.mask_dir.empty())
        extra.push_back("pipeline.mask_dir=\"" + a.mask_dir + "\"");
    if (a.workers)
        extra.push_back("pipeline.workers=" + std::to_string(*a.workers));
    if (a.manifest.empty() == a.one.image.empty())
        throw UsageError("run: give either --image with --caption or --manifest");
    if (!a.one.image.empty() && a.one.caption.empty())
        throw UsageError("run: --image needs --caption");
    const auto cfg = config(extra);
    const auto model = load_model(cfg);

    std::vector<pipeline::BatchItem> items;
    if (!a.manifest.empty())
    {
        for (const auto& e : select_split(io::load_manifest(a.manifest), a.split))
            items.push_back({e.id, e.image_path, e.caption});
    }
    else
        items.push_back({a.one.id, a.one.image, a.one.caption});

    const auto results = pipeline::run_batch(items, model, cfg);
    for (const auto& r : results)
        for (const auto& w : r.warnings)
            log(r.id + ": " + w);
    if (a.manifest.empty())
    {
        emit(pipeline::to_json(results.front()));
        return results.front().present ? kOk : kAbsent;
    }
    json arr = json::array();
    std::size_t present = 0;
    for (const auto& r : results)
    {
        arr.push_back(pipeline::to_json(r));
        present += r.present;
    }
    log(std::to_string(present) + " of " + std::to_string(results.size()) + " present");
    emit({{"results", arr}});
    return kOk;
}

struct EvalArgs
{
    std::string manifest;
    std::string split = "eval";
    std::string checkpoint;
    std::string modes = "single,multi,box";
    std::string pred, truth;
    std::string scores;
    std::optional<std::size_t> workers;
};

std::vector<std::string> eval_overrides(const EvalArgs& a)
{
    std::vector<std::string> extra;
    if (!a.checkpoint.empty())
        extra.push_back("pipeline.checkpoint=\"" + a.checkpoint + "\"");
    if (a.workers)
        extra.push_back("pipeline.workers=" + std::to_string(*a.workers));
    return extra;
}

int cmd_eval_iou(const EvalArgs& a)
{
    if (!a.pred.empty() || !a.truth.empty())
    {
        if (a.pred.empty() || a.truth.empty() || !a.manifest.empty())
            throw UsageError("eval-iou: use --pred with --truth, or --manifest");
        emit({{"iou", eval::round6(eval::iou(io::load_mask(a.pred), io::load_mask(a.truth)))}});
        return kOk;
    }
    if (a.manifest.empty())
        throw UsageError("eval-iou: --manifest or --pred/--truth required");
    const auto cfg = config(eval_overrides(a));
    pipeline::EvalOptions opts;
    opts.modes.clear();
    std::stringstream ss(a.modes);
    for (std::string m; std::getline(ss, m, ',');)
        opts.modes.push_back(prompting::parse_mode(m));
    const auto entries = select_split(io::load_manifest(a.manifest), a.split);
    const auto t0 = std::chrono::steady_clock::now();
    json report = pipeline::evaluate_masking(entries, load_model(cfg), cfg, opts);
    log("evaluated " + std::to_string(entries.size()) + " samples in " +
        std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
    emit(report);
    return kOk;
}

int cmd_eval_threshold(const EvalArgs& a)
{
    if (a.scores.empty() == a.manifest.empty())
        throw UsageError("eval-threshold: give exactly one of --scores or --manifest");
    if (!a.scores.empty())
    {
        emit(eval::to_json(eval::optimal_threshold(read_scores(a.scores))));
        return kOk;
    }
    const auto cfg = config(eval_overrides(a));
    pipeline::EvalOptions opts;
    opts.modes = {prompting::PromptMode::Multi};
    const json report =
        pipeline::evaluate_masking(select_split(io::load_manifest(a.manifest), a.split), load_model(cfg), cfg, opts);
    emit(report["threshold_report"]);
    return kOk;
}

int cmd_eval_accuracy(const EvalArgs& a)
{
    if (a.manifest.empty())
        throw UsageError("eval-accuracy: --manifest required");
    const auto cfg = config(eval_overrides(a));
    const auto model = load_model(cfg);
    const auto entries = select_split(io::load_manifest(a.manifest), a.split);
    if (entries.empty())
        throw ValueError("eval-accuracy: no samples in split '" + a.split + "'");
    std::set<std::string> unique;
    for (const auto& e : entries)
        unique.insert(e.caption);
    const std::vector<std::string> captions(unique.begin(), unique.end());
    nn::Tensor scores({entries.size(), captions.size()});
    std::vector<std::size_t> labels(entries.size());
    pipeline::parallel_for(entries.size(), cfg.workers, [&](std::size_t, std::size_t i) {
        const Image img = io::load_ppm(entries[i].image_path);
        for (std::size_t c = 0; c < captions.size(); ++c)
        {
            scores[i * captions.size() + c] = model.score(img, captions[c]).value;
            if (captions[c] == entries[i].caption)
                labels[i] = c;
        }
    });
    emit({{"samples", entries.size()},
          {"captions", captions},
          {"top1", eval::round6(eval::topk_accuracy(scores, labels, 1))},
          {"top5", eval::round6(eval::topk_accuracy(scores, labels, 5))}});
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Attention-guided object masking toolkit", "agm"};
    app.set_help_all_flag("--help-all");
    app.add_option("-c,--config", g.config, "TOML configuration file");
    app.add_option("--set", g.overrides, "override a config key: section.key=value (repeatable)");
    app.add_flag("-q,--quiet", g.quiet, "no log output on stderr");
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate the synthetic shape dataset");
    s->add_option("-o,--out", synth.out, "output directory")->required();
    s->add_option("--seed", synth.seed, "dataset seed");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train the dual encoder on a manifest's train split");
    t->add_option("-m,--manifest", train.manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
    t->add_option("-o,--out", train.out, "checkpoint path (default pipeline.checkpoint)");
    t->add_option("--epochs", train.epochs, "override train.epochs");

    auto add_image_opts = [](CLI::App* sub, ImageArgs& a, bool required) {
        auto* i = sub->add_option("-i,--image", a.image, "PPM image")->check(CLI::ExistingFile);
        auto* c = sub->add_option("--caption", a.caption, "caption to look for");
        if (required)
        {
            i->required();
            c->required();
        }
        sub->add_option("-k,--checkpoint", a.checkpoint, "model checkpoint");
        sub->add_option("--id", a.id, "sample id (seeds prompt sampling)")->default_val("sample");
    };

    ImageArgs score, attend, prompt;
    auto* sc = app.add_subcommand("score", "similarity of an image and a caption");
    add_image_opts(sc, score, true);
    auto* at = app.add_subcommand("attend", "write the attention map as PGM");
    add_image_opts(at, attend, true);
    at->add_option("-o,--out", attend.out, "output PGM")->required();
    auto* pr = app.add_subcommand("prompt", "derive segmentation prompts");
    add_image_opts(pr, prompt, true);
    pr->add_option("--mode", prompt.mode, "single | multi | box");

    MaskArgs mask;
    auto* mk = app.add_subcommand("mask", "segment an image from explicit prompts");
    mk->add_option("-i,--image", mask.image, "PPM image")->required()->check(CLI::ExistingFile);
    mk->add_option("-p,--prompts", mask.prompts, "prompt JSON, or @file")->required();
    mk->add_option("-o,--out", mask.out, "output PGM")->required();

    RunArgs run;
    auto* rn = app.add_subcommand("run", "full pipeline on one image or a manifest");
    add_image_opts(rn, run.one, false);
    rn->add_option("--mode", run.one.mode, "single | multi | box");
    rn->add_option("-m,--manifest", run.manifest, "manifest.jsonl")->check(CLI::ExistingFile);
    rn->add_option("--split", run.split, "train | eval | all")->default_val("eval");
    rn->add_option("--mask-dir", run.mask_dir, "write masks here as <id>.pgm");
    rn->add_option("-j,--workers", run.workers, "worker threads");

    EvalArgs iou, thr, acc;
    auto add_eval_opts = [](CLI::App* sub, EvalArgs& a) {
        sub->add_option("-m,--manifest", a.manifest, "manifest.jsonl")->check(CLI::ExistingFile);
        sub->add_option("--split", a.split, "train | eval | all")->default_val("eval");
        sub->add_option("-k,--checkpoint", a.checkpoint, "model checkpoint");
        sub->add_option("-j,--workers", a.workers, "worker threads");
    };
    auto* ei = app.add_subcommand("eval-iou", "mask IoU per prompt mode, or of two mask files");
    add_eval_opts(ei, iou);
    ei->add_option("--modes", iou.modes, "comma-separated prompt modes")->default_val("single,multi,box");
    ei->add_option("--pred", iou.pred, "predicted mask PGM")->check(CLI::ExistingFile);
    ei->add_option("--truth", iou.truth, "ground-truth mask PGM")->check(CLI::ExistingFile);
    auto* et = app.add_subcommand("eval-threshold", "F1-optimal similarity threshold");
    add_eval_opts(et, thr);
    et->add_option("--scores", thr.scores, "JSON array of {id, score, correct}")->check(CLI::ExistingFile);
    auto* ea = app.add_subcommand("eval-accuracy", "top-1 / top-5 caption accuracy");
    add_eval_opts(ea, acc);

    if (argc <= 1)
    {
        std::cerr << app.help();
        return kUsage;
    }
    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        std::cout << app.help();
        return kOk;
    }
    catch (const CLI::CallForAllHelp& e)
    {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kOk;
    }
    catch (const CLI::ParseError& e)
    {
        std::cerr << "agm: " << e.what() << "\n" << "run 'agm --help' for usage\n";
        return kUsage;
    }

    try
    {
        if (s->parsed())
            return cmd_synth(synth);
        if (t->parsed())
            return cmd_train(train);
        if (sc->parsed())
            return cmd_score(score);
        if (at->parsed())
            return cmd_attend(attend);
        if (pr->parsed())
            return cmd_prompt(prompt);
        if (mk->parsed())
            return cmd_mask(mask);
        if (rn->parsed())
            return cmd_run(run);
        if (ei->parsed())
            return cmd_eval_iou(iou);
        if (et->parsed())
            return cmd_eval_threshold(thr);
        if (ea->parsed())
            return cmd_eval_accuracy(acc);
    }
    catch (const UsageError& e)
    {
        std::cerr << "agm: " << e.what() << '\n';
        return kUsage;
    }
    catch (const ConfigError& e)
    {
        std::cerr << "agm: " << e.what() << '\n';
        return kUsage;
    }
    catch (const std::exception& e)
    {
        std::cerr << "agm: error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
