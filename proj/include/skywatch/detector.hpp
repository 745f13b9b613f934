#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skywatch/boxes.hpp"
#include "skywatch/cube_classifier.hpp"
#include "skywatch/motion_comp.hpp"
#include "skywatch/shift_regressor.hpp"

namespace skywatch {

struct DetectorConfig {
    CubeDims dims{40, 40, 4};
    int stride = 8;
    double scale_step = 0.8;
    int min_side = 40;
    /// Scale of the first pyramid level; 2 adds upsampled levels for targets
    /// smaller than the window.
    double upsample = 2.0;
    double threshold = 0.5;
    double nms_overlap = 0.3;
    bool compensation = true;
    CompensationConfig compensation_config;
    int threads = 1;
};

void validate(const DetectorConfig& config);

/// Pyramid of one frame: the frame resized by `upsample`, then shrunk by
/// scale_step until the short side would drop below min_side. Scales are
/// relative to the original frame.
std::vector<PyramidLevel> detection_pyramid(const Frame& frame, const DetectorConfig& config);

/// Window centers (level coordinates) of a grid that keeps every window inside the level.
std::vector<PixelPos> grid_positions(int width, int height, CubeDims dims, int stride);

/// Cube for one window, compensated when the config asks for it.
StCube window_cube(std::span<const Frame* const> level_frames, CubeAnchor anchor, const ShiftRegressor& regressor,
                   const DetectorConfig& config);

/// Source-frame box of a window's cube: the last slice center mapped back from
/// the level, with side = window / scale.
Detection window_detection(const StCube& cube, double scale, int level, int frame);

std::vector<Detection> detect(std::span<const Frame> frames, const ShiftRegressor& regressor,
                              const CubeClassifier& classifier, const DetectorConfig& config);

/// Greedy suppression: keep the best-scoring detection, drop every other one
/// whose IoU with it exceeds `overlap_threshold`, repeat. Frames are handled
/// independently. Output is sorted by descending score.
std::vector<Detection> nms(std::vector<Detection> detections, double overlap_threshold);

/// Descending score, then frame, row, column, scale.
bool detection_order(const Detection& a, const Detection& b);

struct DetectorTraining {
    AdaBoostConfig boost;
    int positives_per_box = 2;
    int negatives_per_frame = 30;
    /// Windows displaced from each ground-truth box by 0.5 to 1.5 window sides
    /// on a random pyramid level; these cover the partial overlaps that random
    /// grid negatives rarely hit.
    int near_negatives_per_box = 6;
    int frame_step = 1;
    double positive_iou = 0.5;
    double negative_iou = 0.3;
    std::uint64_t seed = 11;
};

struct LabeledCubes {
    std::vector<StCube> cubes;
    std::vector<int> labels;
};

/// Samples windows around ground truth and uniformly over the pyramid grid,
/// builds their cubes the way detection would, and labels them by the IoU of
/// the resulting box with the ground truth (ambiguous overlaps are dropped).
LabeledCubes collect_training_cubes(std::span<const Frame> frames, std::span<const GroundTruthBox> ground_truth,
                                    const ShiftRegressor& regressor, const DetectorConfig& config,
                                    const DetectorTraining& training);

CubeClassifier train_detector(std::span<const Frame> frames, std::span<const GroundTruthBox> ground_truth,
                              const ShiftRegressor& regressor, const DetectorConfig& config,
                              const DetectorTraining& training, AdaBoostTrace* trace = nullptr);

}  // namespace skywatch

namespace skywatch {

/// Centering error of one cube before and after compensation, in level pixels
/// (the level whose scale best maps the target onto the window).
struct CenteringResult {
    GroundTruthBox anchor_box;
    int level = 0;
    double scale = 1.0;
    double error_before = 0.0;
    double error_after = 0.0;
    int converged_slices = 0;
    int slices = 0;
};

/// Anchors `count` cubes on ground-truth boxes displaced by up to `max_shift`
/// window pixels per axis and measures how far each slice center is from the
/// true object center with and without compensation.
std::vector<CenteringResult> centering_study(std::span<const Frame> frames,
                                             std::span<const GroundTruthBox> ground_truth,
                                             const ShiftRegressor& regressor, const DetectorConfig& config,
                                             int count, double max_shift, std::uint64_t seed);

}  // namespace skywatch
