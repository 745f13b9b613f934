#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "skywatch/boxes.hpp"

namespace skywatch {

struct MatchResult {
    /// Aligned with the input detections.
    std::vector<bool> true_positive;
    std::vector<int> matched_gt;  // ground-truth index or -1
    std::vector<bool> gt_matched;
};

/// Greedy single-match protocol: in descending score order, each detection
/// takes the unmatched ground truth of its frame with the highest IoU when
/// that IoU reaches the threshold.
MatchResult match_detections(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truths,
                             double iou_threshold = 0.5);

struct PRPoint {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 1.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// Points ordered from the highest threshold to the lowest.
struct PRCurve {
    std::vector<PRPoint> points;
    std::size_t gt_count = 0;
};

PRCurve pr_curve(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truths,
                 double iou_threshold = 0.5);

/// Sweeps every distinct score given precomputed TP/FP labels.
PRCurve pr_curve_from_labels(std::span<const double> scores, const std::vector<bool>& true_positive,
                             std::size_t gt_count);

/// Step integral of precision over recall.
double average_precision(const PRCurve& curve);

struct SizeBinAveP {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t gt_count = 0;
    double avep = 0.0;
};

/// AveP per ground-truth side bin [edges[k], edges[k+1]). Bins without ground
/// truth are omitted.
std::vector<SizeBinAveP> avep_by_size(std::span<const Detection> detections,
                                      std::span<const GroundTruthBox> ground_truths, std::span<const double> edges,
                                      double iou_threshold = 0.5);

void write_pr_csv(const std::filesystem::path& file, const PRCurve& curve);

}  // namespace skywatch
