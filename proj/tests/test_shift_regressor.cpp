#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "skywatch/shift_regressor.hpp"

using namespace skywatch;

namespace {

// 40x40 patch: smooth sinusoidal texture plus a bright disc of radius 6 whose
// center sits at (20 + dy, 20 + dx); the regression target is minus that offset.
ShiftSample disc_sample(std::mt19937_64& rng, double max_shift) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> shift(-max_shift, max_shift);
    const double dx = shift(rng);
    const double dy = shift(rng);
    const double phase_a = 6.283 * u(rng), phase_b = 6.283 * u(rng);
    const double fa = 0.15 + 0.2 * u(rng), fb = 0.15 + 0.2 * u(rng);
    GrayImage img(40, 40);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) {
            const double bg = 0.4 + 0.06 * std::sin(fa * c + phase_a) * std::cos(fb * r + phase_b);
            const double d = std::hypot(r - (20 + dy), c - (20 + dx));
            const double cover = std::clamp(6.5 - d, 0.0, 1.0);
            img(r, c) = bg + 0.3 * cover;
        }
    return {Patch{std::move(img), {20, 20}, 0}, -dx, -dy};
}

std::vector<ShiftSample> disc_samples(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ShiftSample> out;
    for (int k = 0; k < count; ++k) out.push_back(disc_sample(rng, 10.0));
    return out;
}

std::vector<Frame> textured_frames(int count) {
    std::vector<Frame> frames;
    std::mt19937_64 rng(4);
    for (int k = 0; k < count; ++k) frames.push_back(Frame{oracle::random_image(120, 90, rng), k});
    return frames;
}

}  // namespace

TEST_CASE("regression trees route on value <= threshold") {
    RegressionTree tree({{0, 0.5, 1, 2, 0.0}, {-1, 0.0, -1, -1, -2.0}, {-1, 0.0, -1, -1, 3.0}});
    const double a[] = {0.5};
    const double b[] = {0.7};
    CHECK(tree.evaluate(a) == -2.0);
    CHECK(tree.evaluate(b) == 3.0);
    CHECK(tree.depth() == 1);
    CHECK_THROWS_AS(RegressionTree({{0, 0.5, 0, 0, 0.0}}), std::invalid_argument);
}

TEST_CASE("one round of depth zero predicts the target mean") {
    std::vector<double> x{0.1, 0.5, 0.9, 0.3};
    std::vector<double> y{1.0, 2.0, 4.0, 9.0};
    RegressorConfig cfg{1, 0, 1.0, 1};
    const BoostedEnsemble m = fit_boosted_trees(x, 1, y, cfg);
    for (double v : {0.0, 0.4, 5.0}) {
        const double q[] = {v};
        CHECK(m.predict(q, 1.0) == doctest::Approx(4.0));
    }
    CHECK_THROWS_AS(fit_boosted_trees(x, 1, y, RegressorConfig{0, 1, 0.1, 1}), std::invalid_argument);
}

TEST_CASE("all-zero targets give zero predictions") {
    std::mt19937_64 rng(1);
    std::vector<double> x(200 * 3);
    for (double& v : x) v = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<double> y(200, 0.0);
    const BoostedEnsemble m = fit_boosted_trees(x, 3, y, RegressorConfig{20, 3, 0.1, 5});
    for (std::size_t s = 0; s < 200; ++s) CHECK(std::abs(m.predict(std::span(x).subspan(3 * s, 3), 0.1)) <= 1e-9);
}

TEST_CASE("training loss never increases") {
    std::mt19937_64 rng(2);
    std::vector<double> x(300 * 4), y(300);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : x) v = u(rng);
    for (std::size_t s = 0; s < 300; ++s) y[s] = 3 * x[4 * s] - 2 * x[4 * s + 2] * x[4 * s + 1] + 0.1 * u(rng);
    std::vector<double> losses;
    fit_boosted_trees(x, 4, y, RegressorConfig{60, 3, 0.1, 5}, &losses);
    REQUIRE(losses.size() == 61);
    for (std::size_t k = 1; k < losses.size(); ++k) CHECK(losses[k] <= losses[k - 1] + 1e-15);
    CHECK(losses.back() < 0.2 * losses.front());
}

TEST_CASE("base-only model predicts zero and predictions clamp to half the patch") {
    ShiftRegressor model;
    model.patch_size = {40, 40};
    const Patch p{GrayImage(40, 40, 0.3), {}, 0};
    const ShiftPrediction zero = predict_shift(model, p);
    CHECK(zero.h == 0.0);
    CHECK(zero.v == 0.0);
    model.horizontal.base_value = 55.0;
    model.vertical.base_value = -31.0;
    const ShiftPrediction clamped = predict_shift(model, p);
    CHECK(clamped.h == 20.0);
    CHECK(clamped.v == -20.0);
    CHECK_THROWS_AS(predict_shift(model, Patch{GrayImage(32, 40, 0.3), {}, 0}), std::invalid_argument);
}

TEST_CASE("shift sampling uses every second frame and is deterministic") {
    const auto frames = textured_frames(10);
    std::vector<ShiftAnnotation> annotations;
    for (int k = 0; k < 10; ++k) annotations.push_back({k, {45.0, 60.0}, 30.0});
    ShiftSampling sampling;
    sampling.shifts_per_box = 4;
    const auto a = make_shift_samples(annotations, frames, 9, sampling);
    const auto b = make_shift_samples(annotations, frames, 9, sampling);
    REQUIRE(a.size() == 20);
    REQUIRE(b.size() == 20);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].patch.pixels == b[k].patch.pixels);
        CHECK(a[k].r_h == b[k].r_h);
        CHECK(a[k].r_v == b[k].r_v);
        CHECK(a[k].patch.source_frame_index % 2 == 0);
        CHECK(std::abs(a[k].r_h) <= 20.0);
    }
}

TEST_CASE("sample targets are the patch-minus-object offset") {
    const auto frames = textured_frames(1);
    const ShiftAnnotation ann{0, {45.0, 60.0}, 20.0};
    ShiftSampling sampling;
    sampling.shifts_per_box = 30;
    sampling.max_shift = 8.0;
    for (const auto& s : make_shift_samples(std::span(&ann, 1), frames, 3, sampling)) {
        // Box side 20 maps to 40 patch pixels, so patch offsets are twice source offsets.
        CHECK(s.patch.source_center.j - ann.center.j == doctest::Approx(s.r_h / 2.0));
        CHECK(s.patch.source_center.i - ann.center.i == doctest::Approx(s.r_v / 2.0));
        CHECK(std::abs(s.r_h) <= 8.0);
        CHECK(std::abs(s.r_v) <= 8.0);
    }
    sampling.max_shift = 0.0;
    for (const auto& s : make_shift_samples(std::span(&ann, 1), frames, 3, sampling)) {
        CHECK(s.r_h == 0.0);
        CHECK(s.r_v == 0.0);
        CHECK(s.patch.source_center == ann.center);
        CHECK(s.patch.pixels == extract_scaled_patch(frames[0], ann.center, {40, 40}, 2.0).pixels);
    }
}

TEST_CASE("near samples follow the wide ones and stay within the near range") {
    const auto frames = textured_frames(1);
    const ShiftAnnotation ann{0, {45.0, 60.0}, 20.0};
    ShiftSampling sampling;
    sampling.shifts_per_box = 5;
    sampling.max_shift = 8.0;
    sampling.near_shifts_per_box = 20;
    sampling.near_max_shift = 1.5;
    const auto samples = make_shift_samples(std::span(&ann, 1), frames, 3, sampling);
    REQUIRE(samples.size() == 25);
    sampling.near_shifts_per_box = 0;
    const auto wide = make_shift_samples(std::span(&ann, 1), frames, 3, sampling);
    for (std::size_t k = 0; k < 5; ++k) CHECK(samples[k].r_h == wide[k].r_h);
    for (std::size_t k = 5; k < samples.size(); ++k) {
        CHECK(std::abs(samples[k].r_h) <= 1.5);
        CHECK(std::abs(samples[k].r_v) <= 1.5);
    }
    sampling.near_shifts_per_box = -1;
    CHECK_THROWS_AS(make_shift_samples(std::span(&ann, 1), frames, 3, sampling), std::invalid_argument);
}

TEST_CASE("disc offsets are learned to within 2 px on held-out samples") {
    const auto train = disc_samples(2000, 21);
    const auto test = disc_samples(500, 22);
    const ShiftRegressor model = train_regressor(train, RegressorConfig{200, 4, 0.1, 5});
    double mae_h = 0.0, mae_v = 0.0;
    for (const auto& s : test) {
        const ShiftPrediction p = predict_shift(model, s.patch);
        mae_h += std::abs(p.h - s.r_h);
        mae_v += std::abs(p.v - s.r_v);
    }
    mae_h /= test.size();
    mae_v /= test.size();
    MESSAGE("held-out MAE h=" << mae_h << " v=" << mae_v);
    CHECK(mae_h <= 2.0);
    CHECK(mae_v <= 2.0);
}

TEST_CASE("heavy training drives the training residual below its starting value") {
    const auto train = disc_samples(100, 23);
    const ShiftRegressor model = train_regressor(train, RegressorConfig{500, 4, 0.1, 5});
    REQUIRE(model.horizontal_loss.size() == 501);
    double residual = 0.0;
    for (const auto& s : train) {
        const ShiftPrediction p = predict_shift(model, s.patch);
        residual += (p.h - s.r_h) * (p.h - s.r_h);
    }
    residual /= train.size();
    CHECK(residual < model.horizontal_loss.front());
    CHECK(residual == doctest::Approx(model.horizontal_loss.back()).epsilon(1e-6));
}

TEST_CASE("regressor serialization round trips") {
    const auto train = disc_samples(60, 24);
    const ShiftRegressor model = train_regressor(train, RegressorConfig{5, 2, 0.2, 5});
    std::stringstream buf;
    save_regressor(buf, model);
    const ShiftRegressor back = load_regressor(buf);
    CHECK(back == model);
    std::stringstream bad("garbage");
    CHECK_THROWS(load_regressor(bad));
}
