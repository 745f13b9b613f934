#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "skywatch/synthgen.hpp"

using namespace skywatch;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.width = 96;
    c.height = 80;
    c.frames = 6;
    c.targets = 2;
    c.side_min = 10;
    c.side_max = 24;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("zero targets give empty ground truth and pure background") {
    SynthConfig c = small_config();
    c.targets = 0;
    c.noise_sigma = 0.0;
    const SyntheticSequence seq = generate_sequence(c);
    CHECK(seq.ground_truth.empty());
    CHECK(seq.annotations.empty());
    REQUIRE(seq.frames.size() == 6);
    for (std::size_t f = 0; f < seq.frames.size(); ++f)
        for (std::size_t p = 0; p < seq.backgrounds[f].values().size(); ++p)
            CHECK(std::abs(seq.frames[f].pixels.values()[p] - seq.backgrounds[f].values()[p]) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("the same seed renders bit-identical sequences") {
    const SyntheticSequence a = generate_sequence(small_config());
    const SyntheticSequence b = generate_sequence(small_config());
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t f = 0; f < a.frames.size(); ++f) CHECK(a.frames[f].pixels == b.frames[f].pixels);
    REQUIRE(a.ground_truth.size() == b.ground_truth.size());
    for (std::size_t k = 0; k < a.ground_truth.size(); ++k) {
        CHECK(a.ground_truth[k].center == b.ground_truth[k].center);
        CHECK(a.ground_truth[k].side == b.ground_truth[k].side);
    }
    SynthConfig other = small_config();
    other.seed = 6;
    CHECK_FALSE(generate_sequence(other).frames[0].pixels == a.frames[0].pixels);
}

TEST_CASE("constant-velocity targets advance by exactly their velocity") {
    SynthConfig c = small_config();
    c.width = 400;
    c.height = 300;
    c.frames = 8;
    c.targets = 4;
    c.speed_min = 2.0;
    c.speed_max = 2.0;
    c.noise_sigma = 0.0;
    const SyntheticSequence seq = generate_sequence(c);
    int checked = 0;
    for (int k = 0; k < c.targets; ++k) {
        // Targets that come near a border may reflect; only free flights are checked.
        bool free = true;
        for (int f = 0; f < c.frames; ++f) {
            const auto& g = seq.ground_truth[f * c.targets + k];
            const double m = 0.5 * g.side + 1.0 + 2.0;
            free = free && g.center.j > m && g.center.i > m && g.center.j < c.width - 1 - m && g.center.i < c.height - 1 - m;
        }
        if (!free) continue;
        ++checked;
        const auto& g0 = seq.ground_truth[k];
        const auto& g1 = seq.ground_truth[c.targets + k];
        const double vi = g1.center.i - g0.center.i;
        const double vj = g1.center.j - g0.center.j;
        CHECK(std::hypot(vi, vj) == doctest::Approx(2.0));
        for (int f = 1; f < c.frames; ++f) {
            const auto& a = seq.ground_truth[(f - 1) * c.targets + k];
            const auto& b = seq.ground_truth[f * c.targets + k];
            CHECK(b.center.i - a.center.i == doctest::Approx(vi).epsilon(1e-9));
            CHECK(b.center.j - a.center.j == doctest::Approx(vj).epsilon(1e-9));
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("ground truth is frame-major and stays inside the frame") {
    for (const char* name : {"bench-easy", "bench-hard", "bench-collision"}) {
        const SynthConfig c = named_benchmark(name);
        const SyntheticSequence seq = generate_sequence(c);
        CHECK(seq.ground_truth.size() == static_cast<std::size_t>(c.frames * c.targets));
        for (std::size_t k = 0; k < seq.ground_truth.size(); ++k) {
            const auto& g = seq.ground_truth[k];
            CHECK(g.frame == static_cast<int>(k) / c.targets);
            CHECK(g.center.j - g.side / 2 >= 0.0);
            CHECK(g.center.i - g.side / 2 >= 0.0);
            CHECK(g.center.j + g.side / 2 <= c.width);
            CHECK(g.center.i + g.side / 2 <= c.height);
        }
    }
}

TEST_CASE("targets are brighter or darker than the background by at least the minimum contrast") {
    SynthConfig c = small_config();
    c.noise_sigma = 0.0;
    c.shape = TargetShape::Disc;
    c.contrast_min = 0.2;
    const SyntheticSequence seq = generate_sequence(c);
    for (const auto& g : seq.ground_truth) {
        double diff = 0.0;
        int n = 0;
        for (int r = static_cast<int>(g.center.i) - 2; r <= static_cast<int>(g.center.i) + 2; ++r)
            for (int col = static_cast<int>(g.center.j) - 2; col <= static_cast<int>(g.center.j) + 2; ++col) {
                diff += std::abs(seq.frames[g.frame].pixels(r, col) - seq.backgrounds[g.frame](r, col));
                ++n;
            }
        CHECK(diff / n >= 0.2 - 1.0 / 255);
    }
}

TEST_CASE("config text round trips and rejects unknown keys") {
    SynthConfig c = named_benchmark("bench-hard");
    c.seed = 99;
    const SynthConfig back = parse_synth_config(format_synth_config(c));
    CHECK(format_synth_config(back) == format_synth_config(c));
    CHECK(back.contrast_min == c.contrast_min);
    CHECK(back.seed == 99);
    const SynthConfig parsed = parse_synth_config("# comment\nwidth = 50\nheight=40\n\nshape = disc\nside_min = 10\nside_max = 20\n");
    CHECK(parsed.width == 50);
    CHECK(parsed.height == 40);
    CHECK(parsed.shape == TargetShape::Disc);
    CHECK_THROWS_AS(parse_synth_config("colour = red\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_synth_config("width\n"), std::invalid_argument);
    CHECK_THROWS_AS(named_benchmark("bench-nope"), std::invalid_argument);
}

TEST_CASE("oversized targets are rejected") {
    SynthConfig c = small_config();
    c.side_min = 70;
    c.side_max = 90;
    CHECK_THROWS_WITH(generate_sequence(c), doctest::Contains("target larger than frame"));
}

TEST_CASE("sequences are written as frames, ground truth and config") {
    const auto dir = std::filesystem::temp_directory_path() / "skywatch_test_synth";
    std::filesystem::remove_all(dir);
    const SynthConfig c = small_config();
    const SyntheticSequence seq = generate_sequence(c);
    write_sequence(dir, seq, c);
    CHECK(std::filesystem::exists(dir / "frames" / "frame_00000.pgm"));
    CHECK(std::filesystem::exists(dir / "frames" / "frame_00005.pgm"));
    const auto frames = load_frame_sequence(dir / "frames");
    REQUIRE(frames.size() == 6);
    CHECK(frames[3].pixels == seq.frames[3].pixels);
    CHECK(read_ground_truth_csv(dir / "gt.csv").size() == seq.ground_truth.size());
    CHECK(format_synth_config(load_synth_config(dir / "config.txt")) == format_synth_config(c));
}

TEST_CASE("shipped benchmark configs match the built-in benchmarks") {
    const std::filesystem::path dir = SKYWATCH_CONFIG_DIR;
    for (const char* name : {"bench-easy", "bench-hard", "bench-collision"}) {
        const SynthConfig shipped = load_synth_config(dir / (std::string(name) + ".txt"));
        CHECK(format_synth_config(shipped) == format_synth_config(named_benchmark(name)));
    }
}
