#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "skywatch/features.hpp"
#include "skywatch/imagecore.hpp"

namespace skywatch {

/// Axis-aligned binary regression tree over descriptor components. Node 0 is
/// the root; a sample goes left when value <= threshold.
class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;

        bool is_leaf() const { return feature < 0; }
        friend bool operator==(const Node&, const Node&) = default;
    };

    RegressionTree() : nodes_{Node{}} {}
    explicit RegressionTree(std::vector<Node> nodes);

    double evaluate(std::span<const double> x) const;
    const std::vector<Node>& nodes() const { return nodes_; }
    int depth() const;

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

private:
    std::vector<Node> nodes_;
};

struct BoostedEnsemble {
    struct Stage {
        double weight = 1.0;
        RegressionTree tree;
        friend bool operator==(const Stage&, const Stage&) = default;
    };

    double base_value = 0.0;
    std::vector<Stage> stages;

    /// base + shrinkage * sum_j weight_j * tree_j(x)
    double predict(std::span<const double> x, double shrinkage) const;
    friend bool operator==(const BoostedEnsemble&, const BoostedEnsemble&) = default;
};

struct RegressorConfig {
    int rounds = 200;
    int max_depth = 4;
    double shrinkage = 0.1;
    int min_leaf = 5;

    friend bool operator==(const RegressorConfig&, const RegressorConfig&) = default;
};

/// Fits base + shrinkage * sum of least-squares trees to `targets`.
/// `features` is row-major, one row of `dim` values per sample. When `losses`
/// is given it receives the mean squared residual before round 1 and after
/// every round.
BoostedEnsemble fit_boosted_trees(std::span<const double> features, std::size_t dim, std::span<const double> targets,
                                  const RegressorConfig& config, std::vector<double>* losses = nullptr);

/// Horizontal and vertical offset predictors. Predictions are the position of
/// the patch center relative to the object center (patch minus object), in
/// patch pixels, so subtracting them from the patch center lands on the object.
struct ShiftRegressor {
    BoostedEnsemble horizontal;
    BoostedEnsemble vertical;
    double shrinkage = 0.1;
    PatchSize patch_size;
    HogGeometry geometry;
    RegressorConfig config;
    std::vector<double> horizontal_loss;
    std::vector<double> vertical_loss;

    std::size_t descriptor_length() const { return hog_length(patch_size, geometry); }
    friend bool operator==(const ShiftRegressor&, const ShiftRegressor&) = default;
};

struct ShiftSample {
    Patch patch;
    double r_h = 0.0;
    double r_v = 0.0;
};

/// Annotated object occurrence: frame index, center and box side in pixels.
struct ShiftAnnotation {
    int frame = 0;
    PixelPos center;
    double side = 0.0;
};

struct ShiftSampling {
    PatchSize patch_size{40, 40};
    int shifts_per_box = 4;
    /// Largest displacement per axis in patch pixels; negative means half the patch.
    double max_shift = -1.0;
    /// Box-to-patch scale is multiplied by a log-uniform factor in [1/j, j].
    double scale_jitter = 1.0;
    /// Extra samples per annotation with displacements up to near_max_shift.
    /// They sharpen predictions close to the object, where iterative
    /// re-centering decides whether it has converged.
    int near_shifts_per_box = 0;
    double near_max_shift = 1.5;
};

/// Samples displaced patches around annotations on even-numbered frames.
/// Each annotated box is rescaled so that its side spans the patch.
std::vector<ShiftSample> make_shift_samples(std::span<const ShiftAnnotation> annotations,
                                            std::span<const Frame> frames, std::uint64_t seed,
                                            const ShiftSampling& sampling = {});

ShiftRegressor train_regressor(std::span<const ShiftSample> samples, const RegressorConfig& config = {},
                               const HogGeometry& geometry = {});

struct ShiftPrediction {
    double h = 0.0;
    double v = 0.0;
};

ShiftPrediction predict_shift(const ShiftRegressor& model, const Patch& patch);
/// Same as predict_shift on an already computed descriptor.
ShiftPrediction predict_shift(const ShiftRegressor& model, std::span<const double> descriptor);

void save_regressor(std::ostream& out, const ShiftRegressor& model);
ShiftRegressor load_regressor(std::istream& in);
void save_regressor(const std::filesystem::path& file, const ShiftRegressor& model);
ShiftRegressor load_regressor(const std::filesystem::path& file);

}  // namespace skywatch
