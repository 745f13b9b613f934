#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "skywatch/features.hpp"
#include "skywatch/st_cube.hpp"

namespace skywatch {

enum class FeatureMode : std::uint32_t { GradientEnergy = 0, Hog3d = 1 };

std::string to_string(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& text);

/// Thresholded scalar feature. With polarity +1 it fires iff value > threshold,
/// with polarity -1 iff value <= threshold.
struct WeakLearner {
    CubeBox box;             // gradient-energy mode
    std::int32_t component = -1;  // hog3d mode
    double threshold = 0.0;
    int polarity = 1;
    double alpha = 0.0;

    bool fires(double value) const { return polarity > 0 ? value > threshold : value <= threshold; }
    friend bool operator==(const WeakLearner&, const WeakLearner&) = default;
};

struct CubeClassifier {
    std::vector<WeakLearner> learners;
    FeatureMode mode = FeatureMode::GradientEnergy;
    CubeDims dims;
    int bins = kChannelBins;
    HogGeometry hog_geometry;
    /// Whether the training cubes were motion compensated.
    bool compensated = true;

    std::size_t size() const { return learners.size(); }
    friend bool operator==(const CubeClassifier&, const CubeClassifier&) = default;
};

struct AdaBoostConfig {
    int rounds = 200;
    int pool_size = 2000;
    int min_box_side = 4;
    std::uint64_t seed = 1;
    FeatureMode mode = FeatureMode::GradientEnergy;
    int threads = 1;
};

/// Per-round diagnostics of a training run.
struct AdaBoostTrace {
    std::vector<double> weighted_errors;  // clamped epsilon_j of each selected learner
    std::vector<double> training_errors;  // ensemble error after each round
    bool halted_early = false;
};

/// Discrete AdaBoost over randomly drawn candidate features. Labels are +1/-1.
CubeClassifier train_adaboost(std::span<const StCube> cubes, std::span<const int> labels, const AdaBoostConfig& config,
                              AdaBoostTrace* trace = nullptr);

/// Scalar value a learner thresholds, given the cube's precomputed features.
double learner_value(const WeakLearner& learner, const ChannelVolume& channels);

/// Weighted vote of firing learners divided by the total positive weight, in [0,1].
double score_cube(const CubeClassifier& model, const StCube& cube);
double score_channels(const CubeClassifier& model, const ChannelVolume& channels);
double score_descriptor(const CubeClassifier& model, std::span<const double> hog3d_values);

void save_classifier(std::ostream& out, const CubeClassifier& model);
CubeClassifier load_classifier(std::istream& in);
void save_classifier(const std::filesystem::path& file, const CubeClassifier& model);
CubeClassifier load_classifier(const std::filesystem::path& file);

}  // namespace skywatch
