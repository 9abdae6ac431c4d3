#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "gfk/dataset.hpp"
#include "gfk/frontline.hpp"
#include "gfk/synth.hpp"

using namespace gfk;

namespace {

SceneParams desk_params(uint64_t seed) {
    SceneParams p;
    p.seed = seed;
    return p;
}

double region_mean(const SitsFrame& frame, uint8_t cls) {
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < frame.mask.pixels(); ++i) {
        if (frame.mask.labels[static_cast<size_t>(i)] == cls) {
            sum += frame.image[static_cast<size_t>(i)];
            ++count;
        }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

double front_centroid_row(const ZoneMask& mask) {
    // mean row of the glacier->ocean transition per column
    double sum = 0.0;
    int count = 0;
    for (int x = 0; x < mask.width; ++x) {
        for (int y = 1; y < mask.height; ++y) {
            if (mask.at(y - 1, x) == kZoneGlacier && mask.at(y, x) == kZoneOim) {
                sum += y;
                ++count;
                break;
            }
        }
    }
    return count > 0 ? sum / count : -1.0;
}

}  // namespace

TEST_CASE("same seed yields bit-identical samples") {
    SceneParams p = desk_params(7);
    p.melange_prob = 0.5;
    p.snow_prob = 0.5;
    SitsSample a = generate(p, 6);
    SitsSample b = generate(p, 6);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t t = 0; t < a.frames.size(); ++t) {
        CHECK(a.frames[t].image == b.frames[t].image);
        CHECK(a.frames[t].mask.labels == b.frames[t].mask.labels);
        CHECK(a.frames[t].date == b.frames[t].date);
    }
}

TEST_CASE("noise-free rendering matches configured class means within 1%") {
    SceneParams p = desk_params(11);
    p.melange_prob = 0.0;
    p.snow_prob = 0.0;
    p.speckle_looks = 1e8;
    SitsSample s = generate(p, 3);
    for (const auto& frame : s.frames) {
        CHECK(region_mean(frame, kZoneNa) == doctest::Approx(p.mean_na).epsilon(0.01));
        CHECK(region_mean(frame, kZoneRock) == doctest::Approx(p.mean_rock).epsilon(0.01));
        CHECK(region_mean(frame, kZoneGlacier) == doctest::Approx(p.mean_glacier).epsilon(0.01));
        CHECK(region_mean(frame, kZoneOim) == doctest::Approx(p.mean_ocean).epsilon(0.01));
    }
}

TEST_CASE("retreat rate moves the front centroid by the configured pixels per frame") {
    SceneParams p = desk_params(13);
    p.retreat_m_per_frame = 100.0;
    p.resolution_m_per_px = 50.0;
    p.calving_prob = 0.0;
    p.side = 160;  // room for 2 px/frame over the series
    SitsSample s = generate(p, 5);
    std::vector<double> centroids;
    for (const auto& frame : s.frames) centroids.push_back(front_centroid_row(frame.mask));
    for (size_t t = 1; t < centroids.size(); ++t)
        CHECK(centroids[t - 1] - centroids[t] == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("speckle multiplier moments") {
    Rng rng(17);
    // unit mean within 1% over 1e6 draws
    {
        double sum = 0.0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) sum += speckle_multiplier(4.0, rng);
        CHECK(sum / n == doctest::Approx(1.0).epsilon(0.01));
    }
    // variance close to 1/L for L=4
    {
        double sum = 0.0, sq = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double v = speckle_multiplier(4.0, rng);
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        CHECK(var == doctest::Approx(0.25).epsilon(0.05));
    }
    // enormous look count leaves the image nearly untouched
    {
        std::vector<double> img(256, 0.5);
        speckle(img, 1e6, rng);
        for (double v : img) CHECK(std::fabs(v - 0.5) / 0.5 < 0.01);
    }
}

TEST_CASE("masks are independent of appearance confounders") {
    SceneParams clean = desk_params(19);
    SceneParams noisy = clean;
    noisy.melange_prob = 1.0;
    noisy.snow_prob = 1.0;
    noisy.speckle_looks = 1.0;
    SitsSample a = generate(clean, 6);
    SitsSample b = generate(noisy, 6);
    for (size_t t = 0; t < a.frames.size(); ++t) {
        CHECK(a.frames[t].mask.labels == b.frames[t].mask.labels);
        CHECK(a.frames[t].date == b.frames[t].date);
    }
}

TEST_CASE("melange covers ocean near the front without touching labels") {
    SceneParams p = desk_params(23);
    p.melange_prob = 1.0;
    p.melange_intensity = 1.0;
    p.speckle_looks = 1e8;
    SitsSample s = generate(p, 2);
    const auto& frame = s.frames[0];
    // some ocean pixels now carry glacier-like intensity
    int disguised = 0;
    for (int64_t i = 0; i < frame.mask.pixels(); ++i)
        if (frame.mask.labels[static_cast<size_t>(i)] == kZoneOim &&
            std::fabs(frame.image[static_cast<size_t>(i)] - p.mean_glacier) < 0.02)
            ++disguised;
    CHECK(disguised > 100);
}

TEST_CASE("ground-truth fronts clear the benchmark length threshold") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        SceneParams p = desk_params(seed);
        SitsSample s = generate(p, 8);
        for (const auto& frame : s.frames) {
            FrontSet fronts = extract_front(frame.mask);
            CHECK_FALSE(fronts.empty());
        }
    }
}

TEST_CASE("class shares stay within expected bounds") {
    SceneParams p = desk_params(29);
    SitsSample s = generate(p, 8);
    for (const auto& frame : s.frames) {
        std::array<int64_t, 4> counts{};
        for (uint8_t v : frame.mask.labels) counts[v] += 1;
        const double total = static_cast<double>(frame.mask.pixels());
        CHECK(counts[kZoneOim] / total >= 0.10);
        CHECK(counts[kZoneGlacier] / total >= 0.10);
        CHECK(counts[kZoneRock] / total >= 0.05);
        CHECK(counts[kZoneNa] / total >= 0.02);
    }
}

TEST_CASE("dates are strictly increasing and irregular by default") {
    SceneParams p = desk_params(31);
    SitsSample s = generate(p, 8);
    bool irregular = false;
    for (size_t t = 1; t < s.frames.size(); ++t) {
        const double gap = s.frames[t].date - s.frames[t - 1].date;
        CHECK(gap >= 6.0);
        CHECK(gap <= 30.0);
        if (t >= 2 && std::fabs(gap - (s.frames[t - 1].date - s.frames[t - 2].date)) > 1e-9) irregular = true;
    }
    CHECK(irregular);
}

TEST_CASE("degenerate trajectories are rejected") {
    SceneParams p = desk_params(37);
    p.retreat_m_per_frame = 3000.0;  // the front would leave the frame
    CHECK_THROWS_AS(generate(p, 8), std::invalid_argument);
}

TEST_CASE("pgm round trip and date conversion") {
    std::vector<uint8_t> pixels = {0, 64, 128, 255, 30, 31};
    write_pgm("test_io.pgm", 3, 2, pixels);
    int w = 0, h = 0;
    auto back = read_pgm("test_io.pgm", w, h);
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(back == pixels);
    std::filesystem::remove("test_io.pgm");

    CHECK(date_string_from_offset(0.0) == "2020-01-01");
    CHECK(date_string_from_offset(31.0) == "2020-02-01");
    CHECK(day_offset_from_date_string("2020-03-01") == doctest::Approx(60.0));
    CHECK(day_offset_from_date_string(date_string_from_offset(123.0)) == doctest::Approx(123.0));
    CHECK_THROWS_AS(day_offset_from_date_string("2020-13-01"), std::runtime_error);
}

TEST_CASE("dataset round trip preserves masks, dates, and geometry") {
    SceneParams p = desk_params(41);
    p.melange_prob = 0.4;
    std::vector<SitsSample> samples = {generate(p, 4), generate(desk_params(42), 4)};
    const std::string root = "test_dataset_dir";
    write_dataset(root, samples);
    auto back = read_dataset(root);
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        REQUIRE(back[i].frames.size() == 4);
        CHECK(back[i].resolution_m_per_px == samples[i].resolution_m_per_px);
        for (size_t t = 0; t < 4; ++t) {
            CHECK(back[i].frames[t].mask.labels == samples[i].frames[t].mask.labels);
            CHECK(back[i].frames[t].date == samples[i].frames[t].date);
            // images survive the 8-bit quantization within half a step
            for (size_t j = 0; j < back[i].frames[t].image.size(); ++j)
                CHECK(std::fabs(back[i].frames[t].image[j] - samples[i].frames[t].image[j]) <= 0.5 / 255.0 + 1e-12);
        }
    }
    std::filesystem::remove_all(root);
}

TEST_CASE("mask rendering uses the fixed palette") {
    ZoneMask m(2, 2, 1.0);
    m.labels = {0, 1, 2, 3};
    CHECK(render_mask(m) == std::vector<uint8_t>{0, 85, 170, 255});
}
