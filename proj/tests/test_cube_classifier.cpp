#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "skywatch/cube_classifier.hpp"

using namespace skywatch;

namespace {

// Positives carry a vertical step edge (horizontal gradient), negatives a
// horizontal one; both get mild noise.
StCube edge_cube(bool positive, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 0.01);
    StCube cube;
    cube.dims = {16, 16, 2};
    for (int t = 0; t < 2; ++t) {
        GrayImage img(16, 16);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) img(r, c) = 0.3 + ((positive ? c : r) >= 8 ? 0.4 : 0.0) + noise(rng);
        cube.slices.push_back(Patch{std::move(img), {}, t});
    }
    return cube;
}

struct Dataset {
    std::vector<StCube> cubes;
    std::vector<int> labels;
};

Dataset separable(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset d;
    for (int k = 0; k < n; ++k) {
        d.labels.push_back(k % 2 == 0 ? 1 : -1);
        d.cubes.push_back(edge_cube(k % 2 == 0, rng));
    }
    return d;
}

Dataset noisy(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset d;
    for (int k = 0; k < n; ++k) {
        const bool positive = k % 2 == 0;
        const bool flip = std::uniform_real_distribution<double>(0, 1)(rng) < 0.2;
        d.labels.push_back(positive != flip ? 1 : -1);
        StCube cube = oracle::random_cube({16, 16, 2}, rng);
        if (positive)
            for (auto& s : cube.slices)
                for (int r = 0; r < 16; ++r)
                    for (int c = 8; c < 16; ++c) s.pixels(r, c) += 1.5;
        d.cubes.push_back(std::move(cube));
    }
    return d;
}

CubeClassifier single_learner(CubeDims dims, CubeBox box, double threshold, int polarity) {
    CubeClassifier model;
    model.dims = dims;
    WeakLearner l;
    l.box = box;
    l.threshold = threshold;
    l.polarity = polarity;
    l.alpha = 0.7;
    model.learners.push_back(l);
    return model;
}

}  // namespace

TEST_CASE("feature mode names") {
    CHECK(parse_feature_mode("gradient-energy") == FeatureMode::GradientEnergy);
    CHECK(parse_feature_mode("3d-hog") == FeatureMode::Hog3d);
    CHECK(to_string(FeatureMode::Hog3d) == "3d-hog");
    CHECK_THROWS_AS(parse_feature_mode("haar"), std::invalid_argument);
}

TEST_CASE("weak learner polarity") {
    WeakLearner l;
    l.threshold = 0.4;
    CHECK(l.fires(0.5));
    CHECK_FALSE(l.fires(0.4));
    l.polarity = -1;
    CHECK(l.fires(0.4));
    CHECK_FALSE(l.fires(0.5));
}

TEST_CASE("a perfectly separating feature gives zero training error after one round") {
    const Dataset d = separable(40, 1);
    AdaBoostConfig cfg;
    cfg.rounds = 3;
    cfg.pool_size = 500;
    AdaBoostTrace trace;
    const CubeClassifier model = train_adaboost(d.cubes, d.labels, cfg, &trace);
    REQUIRE(!trace.weighted_errors.empty());
    CHECK(trace.weighted_errors.front() <= 1e-9);
    CHECK(trace.training_errors.front() == 0.0);
    for (std::size_t s = 0; s < d.cubes.size(); ++s) CHECK((score_cube(model, d.cubes[s]) >= 0.5) == (d.labels[s] > 0));
}

TEST_CASE("constant features with random labels halt on the degenerate guard") {
    std::vector<StCube> cubes;
    std::vector<int> labels;
    std::mt19937_64 rng(2);
    for (int k = 0; k < 20; ++k) {
        StCube c;
        c.dims = {8, 8, 2};
        for (int t = 0; t < 2; ++t) c.slices.push_back(Patch{GrayImage(8, 8, 0.5), {}, t});
        cubes.push_back(std::move(c));
        labels.push_back(k % 2 == 0 ? 1 : -1);
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    AdaBoostConfig cfg;
    cfg.rounds = 10;
    cfg.pool_size = 50;
    AdaBoostTrace trace;
    const CubeClassifier model = train_adaboost(cubes, labels, cfg, &trace);
    CHECK(trace.halted_early);
    REQUIRE(model.size() == 1);
    CHECK(model.learners[0].alpha == 0.0);
    CHECK(trace.weighted_errors.front() == doctest::Approx(0.5));
}

TEST_CASE("AdaBoost weighted errors and the exponential training bound") {
    const Dataset d = noisy(120, 3);
    AdaBoostConfig cfg;
    cfg.rounds = 40;
    cfg.pool_size = 200;
    AdaBoostTrace trace;
    train_adaboost(d.cubes, d.labels, cfg, &trace);
    double bound = 1.0;
    for (std::size_t j = 0; j < trace.weighted_errors.size(); ++j) {
        const double e = trace.weighted_errors[j];
        CHECK(e <= 0.5);
        bound *= 2.0 * std::sqrt(e * (1.0 - e));
        CHECK(trace.training_errors[j] <= bound + 1e-12);
    }
}

TEST_CASE("AdaBoost is deterministic for a fixed seed and thread count") {
    const Dataset d = noisy(60, 4);
    AdaBoostConfig cfg;
    cfg.rounds = 8;
    cfg.pool_size = 100;
    const CubeClassifier a = train_adaboost(d.cubes, d.labels, cfg);
    const CubeClassifier b = train_adaboost(d.cubes, d.labels, cfg);
    cfg.threads = 3;
    const CubeClassifier c = train_adaboost(d.cubes, d.labels, cfg);
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("training input validation") {
    const Dataset d = separable(4, 5);
    AdaBoostConfig cfg;
    std::vector<int> bad{1, 1, 1, 1};
    CHECK_THROWS_AS(train_adaboost(d.cubes, bad, cfg), std::invalid_argument);
    std::vector<int> short_labels{1, -1};
    CHECK_THROWS_AS(train_adaboost(d.cubes, short_labels, cfg), std::invalid_argument);
    cfg.rounds = 0;
    CHECK_THROWS_AS(train_adaboost(d.cubes, d.labels, cfg), std::invalid_argument);
}

TEST_CASE("single-learner scores are exactly 1 or 0") {
    std::mt19937_64 rng(6);
    const StCube pos = edge_cube(true, rng);
    const CubeBox box{4, 12, 0, 16, 0, 2, 0};
    const CubeClassifier fires = single_learner(pos.dims, box, 0.5, 1);
    const CubeClassifier silent = single_learner(pos.dims, box, 0.5, -1);
    CHECK(score_cube(fires, pos) == 1.0);
    CHECK(score_cube(silent, pos) == 0.0);
}

TEST_CASE("scores match brute-force evaluation with the direct-loop energy") {
    std::mt19937_64 rng(7);
    const CubeDims dims{20, 20, 3};
    CubeClassifier model;
    model.dims = dims;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int k = 0; k < 30; ++k) {
        WeakLearner l;
        l.box.x0 = draw(0, 15);
        l.box.x1 = draw(l.box.x0 + 1, 20);
        l.box.y0 = draw(0, 15);
        l.box.y1 = draw(l.box.y0 + 1, 20);
        l.box.t0 = draw(0, 2);
        l.box.t1 = draw(l.box.t0 + 1, 3);
        l.box.orientation = draw(0, kChannelBins - 1);
        l.threshold = 0.25 * u(rng);
        l.polarity = u(rng) < 0.5 ? 1 : -1;
        l.alpha = u(rng);
        model.learners.push_back(l);
    }
    for (int trial = 0; trial < 10; ++trial) {
        const StCube cube = oracle::random_cube(dims, rng);
        double vote = 0.0, total = 0.0;
        for (const auto& l : model.learners) {
            if (l.fires(oracle::gradient_energy(cube, l.box, kChannelBins))) vote += l.alpha;
            total += l.alpha;
        }
        CHECK(std::abs(score_cube(model, cube) - vote / total) <= 1e-6);
    }
}

TEST_CASE("3d-hog mode learns descriptor components") {
    const Dataset d = separable(30, 8);
    AdaBoostConfig cfg;
    cfg.rounds = 5;
    cfg.pool_size = 300;
    cfg.mode = FeatureMode::Hog3d;
    AdaBoostTrace trace;
    const CubeClassifier model = train_adaboost(d.cubes, d.labels, cfg, &trace);
    CHECK(model.mode == FeatureMode::Hog3d);
    for (const auto& l : model.learners) CHECK(l.component >= 0);
    CHECK(trace.training_errors.back() == 0.0);
    for (std::size_t s = 0; s < d.cubes.size(); ++s) CHECK((score_cube(model, d.cubes[s]) >= 0.5) == (d.labels[s] > 0));
}

TEST_CASE("classifier serialization round trips and rejects empty ensembles") {
    const Dataset d = separable(20, 9);
    AdaBoostConfig cfg;
    cfg.rounds = 4;
    cfg.pool_size = 50;
    const CubeClassifier model = train_adaboost(d.cubes, d.labels, cfg);
    std::stringstream buf;
    save_classifier(buf, model);
    CHECK(load_classifier(buf) == model);

    CubeClassifier empty = model;
    empty.learners.clear();
    std::stringstream buf2;
    save_classifier(buf2, empty);
    CHECK_THROWS_AS(load_classifier(buf2), std::runtime_error);
}
