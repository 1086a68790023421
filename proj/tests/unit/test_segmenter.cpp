#include "doctest.h"

#include <chrono>
#include <deque>

#include "agm/error.hpp"
#include "agm/eval/metrics.hpp"
#include "agm/io/synth.hpp"
#include "agm/segmenter/external.hpp"
#include "agm/segmenter/segmenter.hpp"

using namespace agm;
using namespace agm::segmenter;
using agm::prompting::Box;
using agm::prompting::Point;
using agm::prompting::PromptKind;
using agm::prompting::PromptSet;

namespace
{

constexpr Rgb kRed{220, 40, 40};
constexpr Rgb kBlue{40, 60, 220};

Image split_image(int w, int h)
{
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.set(x, y, x < w / 2 ? kRed : kBlue);
    return img;
}

PromptSet points(std::vector<Point> p)
{
    const PromptKind k = p.size() == 1 ? PromptKind::SinglePoint : PromptKind::MultiplePoints;
    return {k, std::move(p), {}};
}

PromptSet box(int x0, int y0, int x1, int y1)
{
    return {PromptKind::BoundingBox, {}, {x0, y0, x1, y1}};
}

// exact-color flood fill, optionally clipped
Mask flood_same_color(const Image& img, Point seed, const Box* clip = nullptr)
{
    Mask m(img.width(), img.height());
    const Rgb c = img.at(seed.x, seed.y);
    std::deque<Point> q{seed};
    m.set(seed.x, seed.y);
    while (!q.empty())
    {
        const Point p = q.front();
        q.pop_front();
        const Point nb[4] = {{p.x + 1, p.y}, {p.x - 1, p.y}, {p.x, p.y + 1}, {p.x, p.y - 1}};
        for (Point n : nb)
            if (img.contains(n.x, n.y) && !m.get(n.x, n.y) && img.at(n.x, n.y) == c && (!clip || clip->contains(n)))
            {
                m.set(n.x, n.y);
                q.push_back(n);
            }
    }
    return m;
}

bool subset(const Mask& a, const Mask& b)
{
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (a.get(x, y) && !b.get(x, y))
                return false;
    return true;
}

std::vector<std::string> stub(const std::string& mode)
{
    return {AGM_STUB_ADAPTER, mode};
}

}  // namespace

TEST_CASE("segmenter config")
{
    CHECK(parse_backend("reference") == Backend::Reference);
    CHECK(parse_backend("external") == Backend::External);
    CHECK_THROWS_AS(parse_backend("sam"), ConfigError);
    SegmenterConfig c;
    CHECK(c.color_tolerance == 30.0);
    CHECK_NOTHROW(c.validate());
    c.color_tolerance = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.backend = Backend::External;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.command = {"x"};
    c.timeout_ms = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("reference point segmentation")
{
    const SegmenterConfig cfg;
    SUBCASE("uniform image fills")
    {
        const Image img(10, 7, Rgb{90, 120, 30});
        Mask full(10, 7);
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 10; ++x)
                full.set(x, y);
        CHECK(segment_points(img, points({{3, 4}}), cfg) == full);
    }
    SUBCASE("split image gives exactly the seeded half")
    {
        const Image img = split_image(12, 8);
        CHECK(segment_points(img, points({{2, 5}}), cfg) == flood_same_color(img, {2, 5}));
        CHECK(segment_points(img, points({{9, 1}}), cfg) == flood_same_color(img, {9, 1}));
        CHECK(segment_points(img, points({{9, 1}, {0, 0}}), cfg).popcount() == 96);
    }
    SUBCASE("zero tolerance on distinct colors keeps only the seeds")
    {
        Image img(8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                img.set(x, y, Rgb{static_cast<std::uint8_t>(x * 30), static_cast<std::uint8_t>(y * 30), 7});
        SegmenterConfig zero;
        zero.color_tolerance = 0.0;
        const Mask m = segment_points(img, points({{1, 2}, {6, 6}}), zero);
        CHECK(m.popcount() == 2);
        CHECK(m.get(1, 2));
        CHECK(m.get(6, 6));
    }
    SUBCASE("errors")
    {
        const Image img = split_image(6, 6);
        CHECK_THROWS_AS(segment_points(img, points({{6, 0}}), cfg), ValueError);
        CHECK_THROWS_AS(segment_points(img, points({{0, -1}}), cfg), ValueError);
        CHECK_THROWS_AS(segment_points(img, {PromptKind::MultiplePoints, {}, {}}, cfg), ValueError);
        CHECK_THROWS_AS(segment_points(img, box(0, 0, 1, 1), cfg), ValueError);
    }
}

TEST_CASE("reference box segmentation")
{
    const SegmenterConfig cfg;
    SUBCASE("box over a uniform image is filled")
    {
        const Image img(10, 10, Rgb{1, 2, 3});
        const Mask m = segment_box(img, box(2, 3, 7, 5), cfg);
        CHECK(m.popcount() == 18);
        for (int y = 3; y <= 5; ++y)
            for (int x = 2; x <= 7; ++x)
                CHECK(m.get(x, y));
    }
    SUBCASE("box straddling the boundary keeps the center color inside the box")
    {
        const Image img = split_image(12, 8);
        const Box b{1, 2, 8, 6};
        const Mask m = segment_box(img, box(1, 2, 8, 6), cfg);
        CHECK(m == flood_same_color(img, {4, 4}, &b));
        CHECK(m.popcount() == 25);
    }
    SUBCASE("1x1 box")
    {
        const Image img(5, 5, Rgb{9, 9, 9});
        const Mask m = segment_box(img, box(3, 1, 3, 1), cfg);
        CHECK(m.popcount() == 1);
        CHECK(m.get(3, 1));
    }
    SUBCASE("errors")
    {
        const Image img(5, 5);
        CHECK_THROWS_AS(segment_box(img, box(0, 0, 5, 2), cfg), ValueError);
        CHECK_THROWS_AS(segment_box(img, box(3, 0, 2, 2), cfg), ValueError);
        CHECK_THROWS_AS(segment_box(img, points({{1, 1}}), cfg), ValueError);
    }
}

TEST_CASE("reference segmentation properties")
{
    SUBCASE("seeds are included, boxes contain the result, output is deterministic")
    {
        SplitMix64 rng(12);
        for (int t = 0; t < 30; ++t)
        {
            Image img(16, 16);
            for (auto& b : img.bytes())
                b = static_cast<std::uint8_t>(rng.below(64) + (rng.below(2) ? 150 : 0));
            SegmenterConfig cfg;
            cfg.color_tolerance = rng.uniform(0.0, 120.0);
            const Point a{static_cast<int>(rng.below(16)), static_cast<int>(rng.below(16))};
            const Point b{static_cast<int>(rng.below(16)), static_cast<int>(rng.below(16))};
            const Mask m = segment(img, points({a, b}), cfg);
            CHECK(m.get(a.x, a.y));
            CHECK(m.get(b.x, b.y));
            CHECK(m == segment(img, points({a, b}), cfg));

            const int x0 = std::min(a.x, b.x), x1 = std::max(a.x, b.x);
            const int y0 = std::min(a.y, b.y), y1 = std::max(a.y, b.y);
            const Mask mb = segment(img, box(x0, y0, x1, y1), cfg);
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x)
                    if (mb.get(x, y))
                        CHECK((x >= x0 && x <= x1 && y >= y0 && y <= y1));
        }
    }
    SUBCASE("larger tolerance never shrinks the mask on flat synthetic scenes")
    {
        io::SynthConfig sc;
        sc.noise_amplitude = 0;
        const auto concepts = sc.resolved_concepts();
        for (int i = 0; i < 16; ++i)
        {
            const auto s = io::render_sample(sc, concepts[static_cast<std::size_t>(i) % concepts.size()],
                                             "mono" + std::to_string(i));
            const Point seeds[2] = {{0, 0}, {32, 32}};
            for (Point seed : seeds)
            {
                Mask prev = grow_region(s.image, seed, 0.0);
                for (double tol = 5.0; tol <= 150.0; tol += 5.0)
                {
                    const Mask cur = grow_region(s.image, seed, tol);
                    CHECK(subset(prev, cur));
                    prev = cur;
                }
            }
        }
    }
    SUBCASE("running-mean growth is not monotone in general")
    {
        // at tolerance 10 the left pixel joins first and drags the mean away from the right one
        Image img(3, 1);
        img.set(0, 0, Rgb{0, 0, 0});
        img.set(1, 0, Rgb{10, 0, 0});
        img.set(2, 0, Rgb{18, 0, 0});
        const Mask lo = grow_region(img, {1, 0}, 8.0);
        const Mask hi = grow_region(img, {1, 0}, 10.0);
        CHECK(lo.get(2, 0));
        CHECK_FALSE(lo.get(0, 0));
        CHECK(hi.get(0, 0));
        CHECK_FALSE(hi.get(2, 0));
    }
    SUBCASE("a seed inside a synthetic shape recovers its mask")
    {
        io::SynthConfig sc;
        const auto concepts = sc.resolved_concepts();
        for (int i = 0; i < 24; ++i)
        {
            const auto s = io::render_sample(sc, concepts[static_cast<std::size_t>(i) % concepts.size()],
                                             "shape" + std::to_string(i));
            Point seed{-1, -1};
            for (int y = 0; y < 64 && seed.x < 0; ++y)
                for (int x = 0; x < 64; ++x)
                    if (s.mask.get(x, y))
                    {
                        seed = {x, y};
                        break;
                    }
            REQUIRE(seed.x >= 0);
            CHECK(eval::iou(segment(s.image, points({seed}), {}), s.mask) >= 0.99);
        }
    }
}

TEST_CASE("external adapter")
{
    const Image img = split_image(9, 6);
    const PromptSet p = points({{1, 1}});

    SUBCASE("all-ones stub")
    {
        AdapterProcess a(stub("ones"), 5000);
        const Mask m = segment_external(a, img, p, "r1");
        CHECK(m.width() == 9);
        CHECK(m.height() == 6);
        CHECK(m.popcount() == 54);
        // the process serves several requests
        CHECK(segment_external(a, img, box(0, 0, 2, 2), "r2").popcount() == 54);
        CHECK(a.alive());
    }
    SUBCASE("reference stub matches the in-process segmenter")
    {
        AdapterProcess a(stub("reference"), 5000);
        CHECK(segment_external(a, img, p, "r") == segment(img, p, {}));
        CHECK(segment_external(a, img, box(2, 1, 7, 4), "b") == segment(img, box(2, 1, 7, 4), {}));
    }
    SUBCASE("wrong dims")
    {
        AdapterProcess a(stub("wrong-dims"), 5000);
        CHECK_THROWS_AS(segment_external(a, img, p, "r"), AdapterDimMismatchError);
    }
    SUBCASE("timeout kills the child")
    {
        AdapterProcess a(stub("sleep:3000"), 200);
        const auto t0 = std::chrono::steady_clock::now();
        CHECK_THROWS_AS(segment_external(a, img, p, "r"), AdapterTimeoutError);
        CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(2000));
        CHECK_FALSE(a.alive());
        CHECK_THROWS_AS(segment_external(a, img, p, "again"), AdapterReplyError);
    }
    SUBCASE("spawn failure")
    {
        CHECK_THROWS_AS(AdapterProcess({"/nonexistent/agm-adapter"}, 1000), AdapterSpawnError);
        CHECK_THROWS_AS(AdapterProcess({}, 1000), AdapterSpawnError);
    }
    SUBCASE("malformed replies")
    {
        AdapterProcess garbage(stub("garbage"), 5000);
        CHECK_THROWS_AS(segment_external(garbage, img, p, "r"), AdapterReplyError);
        AdapterProcess gone(stub("exit"), 5000);
        CHECK_THROWS_AS(segment_external(gone, img, p, "r"), AdapterReplyError);
        AdapterProcess other(stub("wrong-id"), 5000);
        CHECK_THROWS_AS(segment_external(other, img, p, "r"), AdapterReplyError);
        AdapterProcess failing(stub("error"), 5000);
        CHECK_THROWS_WITH_AS(segment_external(failing, img, p, "r"), "adapter error: stub failure", AdapterReplyError);
    }
}
