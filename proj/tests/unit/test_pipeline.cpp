#include "doctest.h"

#include <filesystem>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "agm/error.hpp"
#include "agm/eval/metrics.hpp"
#include "agm/gradcam/gradcam.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/io/synth.hpp"
#include "agm/pipeline/config.hpp"
#include "agm/pipeline/pipeline.hpp"
#include "agm/segmenter/segmenter.hpp"
#include "oracles.hpp"

using namespace agm;
using namespace agm::pipeline;
namespace fs = std::filesystem;

namespace
{

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("agm_test_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

io::SynthConfig small_synth()
{
    io::SynthConfig s;
    s.width = 32;
    s.height = 32;
    s.min_radius = 5.0;
    s.max_radius = 7.0;
    s.concepts = {{"red", io::ShapeKind::Circle}, {"blue", io::ShapeKind::Square}, {"green", io::ShapeKind::Triangle}};
    s.count_per_concept = 4;
    s.seed = 3;
    return s;
}

encoder::DualEncoder small_model(const io::SynthConfig& s, std::uint64_t seed = 5)
{
    std::vector<std::string> captions;
    for (const auto& c : s.resolved_concepts())
        captions.push_back(c.caption());
    return encoder::DualEncoder::random({}, {}, encoder::Vocabulary(captions), seed);
}

}  // namespace

TEST_CASE("shipped config")
{
    const auto cfg = load_config(fs::path(AGM_CONFIG_DIR) / "default.toml");
    CHECK(cfg.gate == 0.489);
    CHECK(kDefaultGate == 0.489);
    CHECK(cfg.mode == prompting::PromptMode::Multi);
    CHECK(cfg.prompting.activation_fraction == 0.8);
    CHECK(cfg.prompting.connectivity == 8);
    CHECK(cfg.prompting.sample_count == 3);
    CHECK(cfg.segmenter.backend == segmenter::Backend::Reference);
    CHECK(cfg.synth.resolved_concepts().size() == 8);
    CHECK(cfg.synth.resolved_concepts().size() * cfg.synth.count_per_concept == 200);
    CHECK(cfg.train.epochs <= 200);

    // built-in defaults agree with the file where the file is silent
    CHECK(load_config(std::nullopt).gate == cfg.gate);
}

TEST_CASE("config parsing")
{
    SUBCASE("empty text gives defaults")
    {
        const auto c = parse_config("");
        CHECK(c.gate == kDefaultGate);
        CHECK(c.workers == 1);
        CHECK(c.gate_first);
    }
    SUBCASE("values")
    {
        const auto c = parse_config(R"(
[pipeline]
gate = 0.3
mode = "box"
workers = 4
[prompting]
activation_fraction = 0.5
connectivity = 4
[train]
embed_dim = 12
learning_rate = 1
[synth]
concepts = ["red circle", "blue square"]
background = [10, 20, 30]
)");
        CHECK(c.gate == 0.3);
        CHECK(c.mode == prompting::PromptMode::Box);
        CHECK(c.workers == 4);
        CHECK(c.prompting.activation_fraction == 0.5);
        CHECK(c.prompting.connectivity == 4);
        CHECK(c.train.image.embed_dim == 12);
        CHECK(c.train.text.embed_dim == 12);
        CHECK(c.train.learning_rate == 1.0);
        REQUIRE(c.synth.concepts.size() == 2);
        CHECK(c.synth.concepts[1].caption() == "blue square");
        CHECK(c.synth.background == Rgb{10, 20, 30});
    }
    SUBCASE("overrides beat the file")
    {
        const auto c = parse_config("[pipeline]\ngate = 0.3\n", {"pipeline.gate=0.7", "pipeline.mode=single",
                                                                   "segmenter.color_tolerance=12"});
        CHECK(c.gate == 0.7);
        CHECK(c.mode == prompting::PromptMode::Single);
        CHECK(c.segmenter.color_tolerance == 12.0);
    }
    SUBCASE("rejections")
    {
        CHECK_THROWS_AS(parse_config("[pipeline]\ngatee = 0.3\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[pipe]\ngate = 0.3\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("gate = 0.3\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\ngate = \"high\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\ngate = 1.5\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\nworkers = 0\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\nmode = \"lasso\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[prompting]\nactivation_fraction = 0\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[synth]\nbackground = [1, 2]\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[synth]\nconcepts = [\"red\"]\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("", {"gate=0.3"}), ConfigError);
        CHECK_THROWS_AS(parse_config("", {"pipeline.nope=1"}), ConfigError);
        CHECK_THROWS_AS(load_config(fs::path("/nonexistent/agm.toml")), ConfigError);
    }
    SUBCASE("syntax errors name the line")
    {
        try
        {
            parse_config("[pipeline]\n\ngate = = 1\n");
            FAIL("expected ConfigError");
        }
        catch (const ConfigError& e)
        {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
}

TEST_CASE("run_pipeline gate")
{
    const auto s = small_synth();
    const auto model = small_model(s);
    const auto sample = io::render_sample(s, s.resolved_concepts()[0], "g0");
    PipelineConfig cfg;

    SUBCASE("absent skips every later stage")
    {
        cfg.gate = 1.0;
        const auto r = run_pipeline(sample.image, "red circle", "g0", model, cfg);
        CHECK(r.similarity < 1.0);
        CHECK_FALSE(r.present);
        CHECK_FALSE(r.prompts.has_value());
        CHECK_FALSE(r.mask.has_value());
        CHECK(r.timings.attend_ms == 0.0);
        CHECK(r.timings.segment_ms == 0.0);
    }
    SUBCASE("present runs to a mask with the image size")
    {
        cfg.gate = -1.0;
        const auto r = run_pipeline(sample.image, "red circle", "g0", model, cfg);
        CHECK(r.present);
        REQUIRE(r.mask.has_value());
        CHECK(r.mask->width() == 32);
        CHECK(r.mask->height() == 32);
        REQUIRE(r.prompts.has_value());
        CHECK(r.similarity == model.score(sample.image, "red circle").value);
    }
    SUBCASE("gate_first off still reports absent but computes attention")
    {
        cfg.gate = 1.0;
        cfg.gate_first = false;
        const auto r = run_pipeline(sample.image, "red circle", "g0", model, cfg);
        CHECK_FALSE(r.present);
        CHECK_FALSE(r.mask.has_value());
    }
    SUBCASE("timings are consecutive spans of one clock")
    {
        cfg.gate = -1.0;
        const auto r = run_pipeline(sample.image, "red circle", "g0", model, cfg);
        const auto& t = r.timings;
        CHECK(t.score_ms >= 0.0);
        CHECK(t.attend_ms >= 0.0);
        CHECK(t.prompt_ms >= 0.0);
        CHECK(t.segment_ms >= 0.0);
        CHECK(t.score_ms + t.attend_ms + t.prompt_ms + t.segment_ms == doctest::Approx(t.total_ms).epsilon(1e-9));
    }
    SUBCASE("external backend without an adapter is a segment-stage error")
    {
        cfg.gate = -1.0;
        cfg.segmenter.backend = segmenter::Backend::External;
        cfg.segmenter.command = {"/bin/true"};
        try
        {
            run_pipeline(sample.image, "red circle", "g0", model, cfg);
            FAIL("expected StageError");
        }
        catch (const StageError& e)
        {
            CHECK(e.stage() == "segment");
        }
    }
}

TEST_CASE("zero attention becomes absent with a warning")
{
    const auto s = small_synth();
    auto model = small_model(s);
    // V no longer depends on the features, so every channel weight is zero
    for (auto& v : model.image().proj_weight.data())
        v = 0.0;
    for (auto& v : model.image().proj_bias.data())
        v = 0.5;
    PipelineConfig cfg;
    cfg.gate = -1.0;
    const auto sample = io::render_sample(s, s.resolved_concepts()[0], "z");
    const auto map = gradcam::attention_for(sample.image, "red circle", model);
    REQUIRE(map.empty);
    const auto r = run_pipeline(sample.image, "red circle", "z", model, cfg);
    CHECK(r.no_activation);
    CHECK_FALSE(r.present);
    CHECK_FALSE(r.mask.has_value());
    CHECK(r.warnings.size() == 1);
}

TEST_CASE("parallel_for")
{
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t, std::size_t i) { hits[i] += 1; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 100);

    try
    {
        parallel_for(50, 3, [](std::size_t, std::size_t i) {
            if (i == 7 || i == 30)
                throw ValueError("boom " + std::to_string(i));
        });
        FAIL("expected ValueError");
    }
    catch (const ValueError& e)
    {
        CHECK(std::string(e.what()) == "boom 7");
    }
    parallel_for(0, 4, [](std::size_t, std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("batch results do not depend on worker count")
{
    const auto dir = scratch("batch");
    auto s = small_synth();
    const auto entries = io::synth_generate(s, dir / "data");
    const auto model = small_model(s);
    std::vector<BatchItem> items;
    for (const auto& e : entries)
        items.push_back({e.id, e.image_path, e.caption});

    PipelineConfig cfg;
    cfg.gate = -1.0;
    cfg.seed = 99;
    for (auto mode : {prompting::PromptMode::Single, prompting::PromptMode::Multi, prompting::PromptMode::Box})
    {
        cfg.mode = mode;
        cfg.workers = 1;
        cfg.mask_dir = dir / "m1";
        auto one = run_batch(items, model, cfg);
        cfg.workers = 4;
        cfg.mask_dir = dir / "m4";
        auto four = run_batch(items, model, cfg);
        REQUIRE(one.size() == items.size());
        REQUIRE(four.size() == items.size());
        for (std::size_t i = 0; i < one.size(); ++i)
        {
            CHECK(one[i].mask_path->filename() == four[i].mask_path->filename());
            four[i].mask_path = one[i].mask_path;
            CHECK(same_outcome(one[i], four[i]));
            CHECK(io::read_file(dir / "m1" / (one[i].id + ".pgm")) == io::read_file(dir / "m4" / (one[i].id + ".pgm")));
        }
        for (std::size_t i = 1; i < one.size(); ++i)
            CHECK(one[i - 1].id < one[i].id);
    }
    fs::remove_all(dir);
}

TEST_CASE("run result json")
{
    RunResult r;
    r.id = "a";
    r.caption = "red circle";
    r.similarity = 0.1234567891;
    r.present = true;
    r.prompts = prompting::PromptSet{prompting::PromptKind::SinglePoint, {{3, 4}}, {}};
    r.mask = Mask(2, 2);
    r.mask->set(1, 1);
    r.timings = {1.0, 2.0, 3.0, 4.0, 10.0};
    const auto j = to_json(r);
    CHECK(j["similarity"] == 0.123457);
    CHECK(j["prompt_kind"] == "single_point");
    CHECK(j["prompts"]["points"] == nlohmann::json::parse("[[3,4]]"));
    CHECK(j["mask"].is_null());
    CHECK(j["mask_pixels"] == 1);
    CHECK(j["timings_ms"]["total"] == 10.0);

    RunResult absent;
    absent.id = "b";
    const auto k = to_json(absent);
    CHECK(k["prompts"].is_null());
    CHECK(k["prompt_kind"].is_null());
    CHECK(k["mask_pixels"].is_null());
}

TEST_CASE("evaluate_masking against a per-sample oracle")
{
    const auto dir = scratch("eval");
    auto s = small_synth();
    auto entries = io::synth_generate(s, dir / "data");
    const auto model = small_model(s, 8);

    // one sample without a mask file, one with an unreadable mask
    entries[0].mask_path.reset();
    {
        std::ofstream(*entries[1].mask_path, std::ios::binary) << "garbage";
    }

    PipelineConfig cfg;
    cfg.seed = 4;
    // gate between the extremes so some samples are gated out
    std::vector<double> own;
    for (const auto& e : entries)
        own.push_back(model.score(io::load_ppm(e.image_path), e.caption).value);
    std::vector<double> sorted = own;
    std::sort(sorted.begin(), sorted.end());
    cfg.gate = sorted[sorted.size() / 2];

    cfg.workers = 3;
    const auto report = evaluate_masking(entries, model, cfg);

    std::set<std::string> uniq;
    for (const auto& e : entries)
        uniq.insert(e.caption);
    const std::vector<std::string> caps(uniq.begin(), uniq.end());

    const std::vector<prompting::PromptMode> modes{prompting::PromptMode::Single, prompting::PromptMode::Multi,
                                                   prompting::PromptMode::Box};
    std::map<std::string, double> sum;
    std::map<std::string, std::map<std::string, double>> expect;
    std::size_t counted = 0, top1 = 0;
    std::vector<eval::ScoredSample> scored;
    for (const auto& e : entries)
    {
        const Image img = io::load_ppm(e.image_path);
        std::size_t best = 0;
        std::vector<double> sc;
        for (const auto& c : caps)
            sc.push_back(model.score(img, c).value);
        for (std::size_t c = 1; c < caps.size(); ++c)
            if (sc[c] > sc[best])
                best = c;
        top1 += caps[best] == e.caption;
        scored.push_back({e.id, sc[best], caps[best] == e.caption});
        if (e.id == entries[0].id || e.id == entries[1].id)
            continue;
        ++counted;
        const Mask truth = io::load_mask(*e.mask_path);
        const double sim = model.score(img, e.caption).value;
        for (auto mode : modes)
        {
            Mask pred(truth.width(), truth.height());
            if (sim >= cfg.gate)
            {
                const auto map = gradcam::attention_for(img, e.caption, model);
                if (!map.empty)
                {
                    prompting::PromptConfig pc = cfg.prompting;
                    pc.seed = sample_seed(cfg.seed, e.id);
                    pred = segmenter::segment(img, prompting::make_prompts(map, mode, pc), cfg.segmenter);
                }
            }
            const std::string kind = mode == prompting::PromptMode::Single  ? "single_point"
                                     : mode == prompting::PromptMode::Multi ? "multiple_points"
                                                                            : "bounding_box";
            const double v = test::oracle_iou(pred, truth);
            expect[e.id][kind] = v;
            sum[kind] += v;
        }
    }

    CHECK(report["samples"] == entries.size());
    CHECK(report["missing_masks"]["count"] == 2);
    CHECK(report["warnings"].size() == 1);
    CHECK(report["per_sample"].size() == counted * 3);
    for (const auto& row : report["per_sample"])
        CHECK(std::abs(row["iou"].get<double>() -
                       expect.at(row["id"].get<std::string>()).at(row["prompt_kind"].get<std::string>())) <= 5e-7);
    for (const auto& [kind, total] : sum)
        CHECK(std::abs(report["mean_iou_by_kind"][kind].get<double>() - total / static_cast<double>(counted)) <= 5e-7);
    CHECK(std::abs(report["accuracy"]["top1"].get<double>() - static_cast<double>(top1) / entries.size()) <= 5e-7);
    CHECK(report["accuracy"]["top5"] == 1.0);  // three candidates
    const auto thr = eval::optimal_threshold(scored);
    CHECK(std::abs(report["threshold_report"]["f1"].get<double>() - thr.f1) <= 5e-7);

    cfg.workers = 1;
    CHECK(evaluate_masking(entries, model, cfg) == report);

    CHECK_THROWS_AS(evaluate_masking({}, model, cfg), ValueError);
    fs::remove_all(dir);
}
