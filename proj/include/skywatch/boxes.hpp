#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "skywatch/imagecore.hpp"

namespace skywatch {

/// Annotated square box; center in (row, col) pixel coordinates.
struct GroundTruthBox {
    int frame = 0;
    PixelPos center;
    double side = 0.0;
};

struct Detection {
    int frame = 0;
    PixelPos center;
    double side = 0.0;
    double score = 0.0;
    int level = 0;
    double scale = 1.0;
    /// Per-frame (rows, cols) velocity in source pixels, when compensated.
    std::optional<PixelPos> velocity;
};

/// Intersection over union of two axis-aligned squares.
double square_iou(PixelPos a_center, double a_side, PixelPos b_center, double b_side);

inline double iou(const Detection& d, const GroundTruthBox& g) { return square_iou(d.center, d.side, g.center, g.side); }
inline double iou(const Detection& a, const Detection& b) { return square_iou(a.center, a.side, b.center, b.side); }

// CSV formats: detections "frame,center_x,center_y,side,score" and ground truth
// "frame,center_x,center_y,side", center_x being the column. Reals use fixed
// six decimals. Readers accept an optional header line.
void write_detections_csv(const std::filesystem::path& file, std::span<const Detection> detections);
std::vector<Detection> read_detections_csv(const std::filesystem::path& file);
void write_ground_truth_csv(const std::filesystem::path& file, std::span<const GroundTruthBox> boxes);
std::vector<GroundTruthBox> read_ground_truth_csv(const std::filesystem::path& file);

}  // namespace skywatch
