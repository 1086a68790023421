#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "agm/encoder/dual_encoder.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/io/synth.hpp"
#include "json_schema.hpp"

using namespace agm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
    int code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s)
{
    std::string q = "'";
    for (char c : s)
        q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

const fs::path& work()
{
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "agm_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Outcome agm_cli(const std::vector<std::string>& args)
{
    std::string cmd = quote(AGM_CLI);
    for (const auto& a : args)
        cmd += " " + quote(a);
    const fs::path err = work() / "stderr.txt";
    cmd += " 2>" + quote(err.string());
    Outcome o;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;)
        o.out.append(buf, n);
    const int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.err = io::read_file(err);
    return o;
}

encoder::DualEncoder golden_model()
{
    return encoder::DualEncoder::random({}, {}, encoder::Vocabulary({"red circle", "blue square"}), 42);
}

// golden checkpoint and image, written once
struct Golden
{
    fs::path checkpoint = work() / "golden.agmw";
    fs::path image = work() / "golden.ppm";
    fs::path truth = work() / "golden_truth.pgm";

    Golden()
    {
        if (fs::exists(checkpoint))
            return;
        golden_model().save(checkpoint);
        io::SynthConfig sc;
        sc.seed = 11;
        const auto s = io::render_sample(sc, {"red", io::ShapeKind::Circle}, "golden");
        io::save_ppm(s.image, image);
        io::save_pgm(io::mask_to_gray(s.mask), truth);
    }
};

json schema()
{
    return json::parse(io::read_file(fs::path(AGM_SCHEMA_DIR) / "run_result.schema.json"));
}

}  // namespace

TEST_CASE("usage errors exit 1")
{
    const auto none = agm_cli({});
    CHECK(none.code == 1);
    CHECK(none.err.find("Usage") != std::string::npos);
    CHECK(none.out.empty());

    CHECK(agm_cli({"frobnicate"}).code == 1);
    CHECK(agm_cli({"run", "--bogus"}).code == 1);
    CHECK(agm_cli({"--help"}).code == 0);

    Golden g;
    // no caption for a single image
    CHECK(agm_cli({"run", "-i", g.image.string(), "-k", g.checkpoint.string()}).code == 1);
    // neither image nor manifest
    CHECK(agm_cli({"run", "-k", g.checkpoint.string()}).code == 1);
    // nonexistent input file
    CHECK(agm_cli({"run", "-i", (work() / "nope.ppm").string(), "--caption", "red circle"}).code == 1);
    // unknown config key and malformed config file
    CHECK(agm_cli({"--set", "pipeline.nope=1", "run", "-i", g.image.string(), "--caption", "red circle", "-k",
                   g.checkpoint.string()})
              .code == 1);
    const fs::path bad = work() / "bad.toml";
    std::ofstream(bad) << "[pipeline]\ngate = = 2\n";
    const auto cfg = agm_cli({"-c", bad.string(), "run", "-i", g.image.string(), "--caption", "red circle"});
    CHECK(cfg.code == 1);
    CHECK(cfg.err.find("line 2") != std::string::npos);
}

TEST_CASE("run exit codes and output schema")
{
    Golden g;
    const json sch = schema();
    const std::vector<std::string> base{"run", "-i", g.image.string(), "--caption", "red circle", "-k",
                                        g.checkpoint.string()};

    SUBCASE("present: 0")
    {
        auto args = base;
        args.insert(args.begin(), {"--set", "pipeline.gate=-1"});
        args.insert(args.end(), {"--mask-dir", (work() / "masks").string(), "--id", "g1"});
        const auto o = agm_cli(args);
        REQUIRE(o.code == 0);
        const json j = json::parse(o.out);
        CHECK(test::schema_errors(j, sch).empty());
        CHECK(j["present"] == true);
        CHECK(j["prompt_kind"] == "multiple_points");
        CHECK(j["mask"] == (work() / "masks" / "g1.pgm").string());
        const Mask m = io::load_mask(work() / "masks" / "g1.pgm");
        CHECK(static_cast<long>(m.popcount()) == j["mask_pixels"].get<long>());
    }
    SUBCASE("absent: 2")
    {
        auto args = base;
        args.insert(args.begin(), {"--set", "pipeline.gate=1"});
        const auto o = agm_cli(args);
        REQUIRE(o.code == 2);
        const json j = json::parse(o.out);
        CHECK(test::schema_errors(j, sch).empty());
        CHECK(j["present"] == false);
        CHECK(j["prompts"].is_null());
        CHECK(j["mask_pixels"].is_null());
    }
    SUBCASE("runtime failure: 3")
    {
        const fs::path broken = work() / "broken.ppm";
        std::ofstream(broken) << "P6\n4 4\n255\nxx";
        CHECK(agm_cli({"run", "-i", broken.string(), "--caption", "red circle", "-k", g.checkpoint.string()}).code ==
              3);
        CHECK(agm_cli({"run", "-i", g.image.string(), "--caption", "red circle", "-k",
                       (work() / "missing.agmw").string()})
                  .code == 3);
        const auto adapter = agm_cli({"--set", "pipeline.gate=-1", "--set", "segmenter.backend=external", "--set",
                                      "segmenter.command=[\"/nonexistent/adapter\"]", "run", "-i", g.image.string(),
                                      "--caption", "red circle", "-k", g.checkpoint.string()});
        CHECK(adapter.code == 3);
        CHECK(adapter.err.find("segment") != std::string::npos);
    }
    SUBCASE("external stub backend matches the reference backend")
    {
        auto args = base;
        args.insert(args.begin(), {"--set", "pipeline.gate=-1"});
        const json ref = json::parse(agm_cli(args).out);
        auto ext = args;
        ext.insert(ext.begin(), {"--set", "segmenter.backend=external", "--set",
                                 "segmenter.command=[\"" + std::string(AGM_STUB_ADAPTER) + "\", \"reference\"]"});
        const auto o = agm_cli(ext);
        REQUIRE(o.code == 0);
        const json j = json::parse(o.out);
        CHECK(j["mask_pixels"] == ref["mask_pixels"]);
        CHECK(j["prompts"] == ref["prompts"]);
    }
}

TEST_CASE("attend output matches the golden file on every run")
{
    Golden g;
    const std::string golden = io::read_file(fs::path(AGM_FIXTURE_DIR) / "attention_golden.pgm");
    for (int run = 0; run < 2; ++run)
    {
        const fs::path out = work() / ("attend" + std::to_string(run) + ".pgm");
        const auto o = agm_cli({"attend", "-i", g.image.string(), "--caption", "red circle", "-k",
                                g.checkpoint.string(), "-o", out.string()});
        REQUIRE(o.code == 0);
        CHECK(io::read_file(out) == golden);
        const json j = json::parse(o.out);
        CHECK(j["empty"] == false);
    }
}

TEST_CASE("score, prompt and mask subcommands")
{
    Golden g;
    const auto model = golden_model();
    const Image img = io::load_ppm(g.image);

    const auto s = agm_cli({"score", "-i", g.image.string(), "--caption", "red circle", "-k", g.checkpoint.string()});
    REQUIRE(s.code == 0);
    const json sj = json::parse(s.out);
    CHECK(std::abs(sj["similarity"].get<double>() - model.score(img, "red circle").value) <= 5e-7);
    CHECK(sj["gate"] == 0.489);

    const std::vector<std::string> pargs{"prompt", "-i", g.image.string(), "--caption", "red circle", "-k",
                                         g.checkpoint.string(), "--id", "x"};
    const auto p1 = agm_cli(pargs);
    const auto p2 = agm_cli(pargs);
    REQUIRE(p1.code == 0);
    CHECK(p1.out == p2.out);
    auto box_args = pargs;
    box_args.insert(box_args.end(), {"--mode", "box"});
    const json box = json::parse(agm_cli(box_args).out);
    CHECK(box["kind"] == "box");

    const fs::path mask = work() / "mask.pgm";
    const auto m = agm_cli({"mask", "-i", g.image.string(), "-p", R"({"v":1,"kind":"points","points":[[32,32]]})", "-o",
                            mask.string()});
    REQUIRE(m.code == 0);
    CHECK(io::load_mask(mask).get(32, 32));
    CHECK(agm_cli({"mask", "-i", g.image.string(), "-p", R"({"v":2,"kind":"points","points":[[1,1]]})", "-o",
                   mask.string()})
              .code == 3);
    CHECK(agm_cli({"mask", "-i", g.image.string(), "-p", "{not json", "-o", mask.string()}).code == 1);
}

TEST_CASE("eval subcommands")
{
    Golden g;
    SUBCASE("threshold fixture")
    {
        const auto o = agm_cli({"eval-threshold", "--scores", (fs::path(AGM_FIXTURE_DIR) / "threshold_samples.json").string()});
        REQUIRE(o.code == 0);
        const json j = json::parse(o.out);
        CHECK(j["threshold"] == 0.8);
        CHECK(j["f1"] == 1.0);
        CHECK(agm_cli({"eval-threshold"}).code == 1);
    }
    SUBCASE("iou of two files")
    {
        const auto same = agm_cli({"eval-iou", "--pred", g.truth.string(), "--truth", g.truth.string()});
        REQUIRE(same.code == 0);
        CHECK(json::parse(same.out)["iou"] == 1.0);
        CHECK(agm_cli({"eval-iou", "--pred", g.truth.string()}).code == 1);
    }
    SUBCASE("manifest runs")
    {
        const fs::path data = work() / "data";
        REQUIRE(agm_cli({"--set", "synth.count_per_concept=2", "--set", "synth.width=32", "--set", "synth.height=32",
                         "--set", "synth.min_radius=5", "--set", "synth.max_radius=7", "synth", "-o", data.string(),
                         "--seed", "4"})
                    .code == 0);
        const fs::path ckpt = work() / "tiny.agmw";
        const auto t = agm_cli({"--set", "train.epochs=2", "train", "-m", (data / "manifest.jsonl").string(), "-o",
                                ckpt.string()});
        REQUIRE(t.code == 0);
        CHECK(json::parse(t.out)["epoch_loss"].size() == 3);  // initial loss + one per epoch

        const std::string manifest = (data / "manifest.jsonl").string();
        const auto acc = agm_cli({"eval-accuracy", "-m", manifest, "-k", ckpt.string(), "--split", "all"});
        REQUIRE(acc.code == 0);
        CHECK(json::parse(acc.out)["samples"] == 24);

        const auto rep = agm_cli({"eval-iou", "-m", manifest, "-k", ckpt.string(), "--modes", "multi,single"});
        REQUIRE(rep.code == 0);
        const json r = json::parse(rep.out);
        CHECK(r["mean_iou_by_kind"].contains("multiple_points"));
        CHECK(r["mean_iou_by_kind"].contains("single_point"));
        CHECK_FALSE(r["mean_iou_by_kind"].contains("bounding_box"));

        auto batch = [&](const std::string& workers) {
            const auto o = agm_cli({"--set", "pipeline.gate=-1", "run", "-m", manifest, "-k", ckpt.string(), "--split",
                                    "all", "-j", workers});
            REQUIRE(o.code == 0);
            json j = json::parse(o.out);
            for (auto& e : j["results"])
                e.erase("timings_ms");
            return j;
        };
        const json one = batch("1");
        CHECK(one["results"].size() == 24);
        CHECK(one == batch("4"));
        for (const auto& e : json::parse(agm_cli({"--set", "pipeline.gate=-1", "run", "-m", manifest, "-k",
                                                  ckpt.string()})
                                             .out)["results"])
            CHECK(test::schema_errors(e, schema()).empty());
    }
}
