#include "skywatch/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace skywatch {

namespace {

std::vector<std::size_t> by_descending_score(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<double> scores_of(std::span<const Detection> detections) {
    std::vector<double> s;
    s.reserve(detections.size());
    for (const Detection& d : detections) s.push_back(d.score);
    return s;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truths,
                             double iou_threshold) {
    MatchResult m;
    m.true_positive.assign(detections.size(), false);
    m.matched_gt.assign(detections.size(), -1);
    m.gt_matched.assign(ground_truths.size(), false);

    for (std::size_t d : by_descending_score(scores_of(detections))) {
        const Detection& det = detections[d];
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < ground_truths.size(); ++g) {
            if (m.gt_matched[g] || ground_truths[g].frame != det.frame) continue;
            const double o = iou(det, ground_truths[g]);
            if (o > best_iou) {
                best_iou = o;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0 && best_iou >= iou_threshold) {
            m.true_positive[d] = true;
            m.matched_gt[d] = best;
            m.gt_matched[best] = true;
        }
    }
    return m;
}

PRCurve pr_curve_from_labels(std::span<const double> scores, const std::vector<bool>& true_positive,
                             std::size_t gt_count) {
    if (gt_count == 0) throw std::invalid_argument("precision-recall needs at least one ground truth");
    if (scores.size() != true_positive.size()) throw std::invalid_argument("scores and labels must align");
    PRCurve curve;
    curve.gt_count = gt_count;
    if (scores.empty()) {
        curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0, 0, 0, gt_count});
        return curve;
    }
    const auto order = by_descending_score(scores);
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (true_positive[order[k]]) ++tp;
        else ++fp;
        const bool group_end = k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]];
        if (!group_end) continue;
        PRPoint p;
        p.threshold = scores[order[k]];
        p.tp = tp;
        p.fp = fp;
        p.fn = gt_count - std::min(tp, gt_count);
        p.recall = static_cast<double>(tp) / static_cast<double>(gt_count);
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        curve.points.push_back(p);
    }
    return curve;
}

PRCurve pr_curve(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truths,
                 double iou_threshold) {
    if (ground_truths.empty()) throw std::invalid_argument("precision-recall needs at least one ground truth");
    const MatchResult m = match_detections(detections, ground_truths, iou_threshold);
    return pr_curve_from_labels(scores_of(detections), m.true_positive, ground_truths.size());
}

double average_precision(const PRCurve& curve) {
    double area = 0.0;
    double previous_recall = 0.0;
    for (const PRPoint& p : curve.points) {
        area += (p.recall - previous_recall) * p.precision;
        previous_recall = p.recall;
    }
    return std::clamp(area, 0.0, 1.0);
}

std::vector<SizeBinAveP> avep_by_size(std::span<const Detection> detections,
                                      std::span<const GroundTruthBox> ground_truths, std::span<const double> edges,
                                      double iou_threshold) {
    if (edges.size() < 2) throw std::invalid_argument("size bins need at least two edges");
    for (std::size_t k = 1; k < edges.size(); ++k)
        if (!(edges[k - 1] < edges[k])) throw std::invalid_argument("size bin edges must be strictly increasing");

    auto bin_of = [&](double side) -> int {
        for (std::size_t k = 0; k + 1 < edges.size(); ++k)
            if (side >= edges[k] && side < edges[k + 1]) return static_cast<int>(k);
        return -1;
    };

    const MatchResult m = match_detections(detections, ground_truths, iou_threshold);
    std::vector<SizeBinAveP> out;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        std::size_t gt_count = 0;
        for (const GroundTruthBox& g : ground_truths)
            if (bin_of(g.side) == static_cast<int>(b)) ++gt_count;
        if (gt_count == 0) continue;

        std::vector<double> scores;
        std::vector<bool> labels;
        for (std::size_t d = 0; d < detections.size(); ++d) {
            const int g = m.matched_gt[d];
            const bool in_bin = g >= 0 ? bin_of(ground_truths[g].side) == static_cast<int>(b)
                                       : bin_of(detections[d].side) == static_cast<int>(b);
            if (!in_bin) continue;
            scores.push_back(detections[d].score);
            labels.push_back(g >= 0);
        }
        out.push_back({edges[b], edges[b + 1], gt_count,
                       average_precision(pr_curve_from_labels(scores, labels, gt_count))});
    }
    return out;
}

void write_pr_csv(const std::filesystem::path& file, const PRCurve& curve) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "threshold,recall,precision\n";
    char buf[128];
    for (const PRPoint& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", p.threshold, p.recall, p.precision);
        out << buf;
    }
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

}  // namespace skywatch
