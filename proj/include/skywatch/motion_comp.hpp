#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "skywatch/shift_regressor.hpp"
#include "skywatch/st_cube.hpp"

namespace skywatch {

/// Anything that maps a patch to a (patch minus object) offset.
using ShiftPredictor = std::function<ShiftPrediction(const Patch&)>;

struct CompensationConfig {
    double epsilon = 1.0;
    int max_iter = 10;
};

/// Iteratively re-centers every slice on the object: predict the offset,
/// move the slice center by minus the prediction, re-extract, and stop once
/// the squared step falls below epsilon (or after max_iter predictions).
/// `frames` must hold the s_t frames of the cube in temporal order.
StCube compensate_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims,
                       const ShiftPredictor& predictor, const CompensationConfig& config = {});

StCube compensate_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims,
                       const ShiftRegressor& regressor, const CompensationConfig& config = {});

/// Convenience overload selecting frames anchor.t - dims.t + 1 .. anchor.t
/// from a full sequence indexed by position.
StCube compensate_cube(std::span<const Frame> sequence, CubeAnchor anchor, CubeDims dims,
                       const ShiftRegressor& regressor, const CompensationConfig& config = {});

/// Picks frames anchor_t - depth + 1 .. anchor_t out of a sequence.
std::vector<const Frame*> cube_frames(std::span<const Frame> sequence, int anchor_t, int depth);

struct MotionEstimate {
    std::vector<PixelPos> centers;
    /// Least-squares slope of the centers per slice, (rows, cols) per frame.
    PixelPos velocity;
    std::optional<double> speed_m_per_s;
};

MotionEstimate estimate_motion(const StCube& cube, std::optional<double> fps = std::nullopt,
                               std::optional<double> object_size_m = std::nullopt, double object_size_px = 40.0);

}  // namespace skywatch
