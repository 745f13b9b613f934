#pragma once
// Brute-force reference implementations. They share no code with the library
// beyond the plain data types, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "skywatch/boxes.hpp"
#include "skywatch/features.hpp"
#include "skywatch/imagecore.hpp"
#include "skywatch/st_cube.hpp"

namespace oracle {

struct PixelGradient {
    double gx = 0.0;
    double gy = 0.0;
    double magnitude = 0.0;
    int bin = 0;
};

inline int nearest_bin(double gx, double gy, int bins) {
    if (gx == 0.0 && gy == 0.0) return 0;
    double angle = std::atan2(gy, gx);
    while (angle < 0.0) angle += std::numbers::pi;
    while (angle >= std::numbers::pi) angle -= std::numbers::pi;
    const double width = std::numbers::pi / bins;
    int best = 0;
    double best_distance = 1e300;
    for (int k = 0; k <= bins; ++k) {
        const double distance = std::abs(angle - k * width);
        if (distance < best_distance) {
            best_distance = distance;
            best = k % bins;
        }
    }
    return best;
}

inline PixelGradient gradient_at(const skywatch::GrayImage& img, int r, int c, int bins) {
    const int w = img.width();
    const int h = img.height();
    PixelGradient g;
    const int cl = std::max(c - 1, 0), cr = std::min(c + 1, w - 1);
    const int ru = std::max(r - 1, 0), rd = std::min(r + 1, h - 1);
    g.gx = (img(r, cr) - img(r, cl)) / static_cast<double>(cr - cl);
    g.gy = (img(rd, c) - img(ru, c)) / static_cast<double>(rd - ru);
    g.magnitude = std::sqrt(g.gx * g.gx + g.gy * g.gy);
    g.bin = g.magnitude > 0.0 ? nearest_bin(g.gx, g.gy, bins) : 0;
    return g;
}

inline std::vector<double> normalized_blocks(const std::vector<std::vector<std::vector<double>>>& cells,
                                             const skywatch::HogGeometry& geo) {
    const int cells_y = static_cast<int>(cells.size());
    const int cells_x = static_cast<int>(cells[0].size());
    std::vector<double> out;
    for (int by = 0; by + geo.block <= cells_y; by += geo.block_stride) {
        for (int bx = 0; bx + geo.block <= cells_x; bx += geo.block_stride) {
            std::vector<double> block;
            for (int cy = 0; cy < geo.block; ++cy)
                for (int cx = 0; cx < geo.block; ++cx)
                    for (double v : cells[by + cy][bx + cx]) block.push_back(v);
            double sq = 0.0;
            for (double v : block) sq += v * v;
            const double norm = std::sqrt(sq) + skywatch::kHogEpsilon;
            for (double v : block) out.push_back(v / norm);
        }
    }
    return out;
}

inline std::vector<double> hog(const skywatch::GrayImage& img, const skywatch::HogGeometry& geo = {}) {
    const int cells_x = img.width() / geo.cell;
    const int cells_y = img.height() / geo.cell;
    std::vector<std::vector<std::vector<double>>> cells(
        cells_y, std::vector<std::vector<double>>(cells_x, std::vector<double>(geo.bins, 0.0)));
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            const PixelGradient g = gradient_at(img, r, c, geo.bins);
            cells[r / geo.cell][c / geo.cell][g.bin] += g.magnitude;
        }
    return normalized_blocks(cells, geo);
}

inline std::vector<double> hog3d(const skywatch::StCube& cube, const skywatch::HogGeometry& geo = {}) {
    const int w = cube.dims.x;
    const int h = cube.dims.y;
    const int bins = geo.bins + 2;
    std::vector<std::vector<std::vector<double>>> cells(
        h / geo.cell, std::vector<std::vector<double>>(w / geo.cell, std::vector<double>(bins, 0.0)));
    for (std::size_t k = 0; k < cube.slices.size(); ++k) {
        const auto& img = cube.slices[k].pixels;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const PixelGradient g = gradient_at(img, r, c, geo.bins);
                cells[r / geo.cell][c / geo.cell][g.bin] += g.magnitude;
                if (k + 1 < cube.slices.size()) {
                    const double d = cube.slices[k + 1].pixels(r, c) - img(r, c);
                    if (d > 0.0) cells[r / geo.cell][c / geo.cell][geo.bins] += d;
                    if (d < 0.0) cells[r / geo.cell][c / geo.cell][geo.bins + 1] -= d;
                }
            }
    }
    return normalized_blocks(cells, geo);
}

inline double gradient_energy(const skywatch::StCube& cube, const skywatch::CubeBox& box, int bins) {
    double in_bin = 0.0;
    double total = 0.0;
    for (int t = box.t0; t < box.t1; ++t)
        for (int r = box.y0; r < box.y1; ++r)
            for (int c = box.x0; c < box.x1; ++c) {
                const PixelGradient g = gradient_at(cube.slices[t].pixels, r, c, bins);
                total += g.magnitude;
                if (g.bin == box.orientation) in_bin += g.magnitude;
            }
    if (total < skywatch::kFeaturelessEnergy) return 0.0;
    return in_bin / total;
}

inline double iou(skywatch::PixelPos a, double sa, skywatch::PixelPos b, double sb) {
    const double ix = std::max(0.0, std::min(a.j + sa / 2, b.j + sb / 2) - std::max(a.j - sa / 2, b.j - sb / 2));
    const double iy = std::max(0.0, std::min(a.i + sa / 2, b.i + sb / 2) - std::max(a.i - sa / 2, b.i - sb / 2));
    const double inter = ix * iy;
    const double uni = sa * sa + sb * sb - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Indices of detections that survive greedy suppression, by checking each
// candidate against every higher-ranked survivor.
inline std::set<std::size_t> nms_survivors(const std::vector<skywatch::Detection>& dets, double overlap) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        if (dets[a].center.i != dets[b].center.i) return dets[a].center.i < dets[b].center.i;
        if (dets[a].center.j != dets[b].center.j) return dets[a].center.j < dets[b].center.j;
        return dets[a].scale < dets[b].scale;
    });
    std::set<std::size_t> kept;
    for (std::size_t x = 0; x < order.size(); ++x) {
        bool suppressed = false;
        for (std::size_t y = 0; y < x; ++y) {
            const auto& a = dets[order[y]];
            const auto& b = dets[order[x]];
            if (kept.count(order[y]) && a.frame == b.frame && iou(a.center, a.side, b.center, b.side) > overlap)
                suppressed = true;
        }
        if (!suppressed) kept.insert(order[x]);
    }
    return kept;
}

// Greedy matching by descending score; ties keep input order.
inline std::vector<int> greedy_match(const std::vector<skywatch::Detection>& dets,
                                     const std::vector<skywatch::GroundTruthBox>& gts, double threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<int> match(dets.size(), -1);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d : order) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].frame != dets[d].frame) continue;
            const double o = iou(dets[d].center, dets[d].side, gts[g].center, gts[g].side);
            if (o > best_iou) {
                best = static_cast<int>(g);
                best_iou = o;
            }
        }
        if (best >= 0 && best_iou >= threshold) {
            match[d] = best;
            taken[best] = true;
        }
    }
    return match;
}

// Step-integral AveP by recounting TP/FP at every distinct threshold from
// scratch instead of accumulating along a sorted list.
inline double dense_threshold_avep(const std::vector<double>& scores, const std::vector<bool>& tp, std::size_t gts) {
    std::vector<double> thresholds(scores);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double area = 0.0;
    double previous_recall = 0.0;
    for (double tau : thresholds) {
        std::size_t hits = 0, misses = 0;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            if (scores[k] < tau) continue;
            if (tp[k]) ++hits;
            else ++misses;
        }
        const double recall = static_cast<double>(hits) / static_cast<double>(gts);
        const double precision = static_cast<double>(hits) / static_cast<double>(hits + misses);
        area += (recall - previous_recall) * precision;
        previous_recall = recall;
    }
    return area;
}

inline skywatch::GrayImage random_image(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    skywatch::GrayImage img(w, h);
    for (double& v : img.values()) v = u(rng);
    return img;
}

inline skywatch::StCube random_cube(skywatch::CubeDims dims, std::mt19937_64& rng) {
    skywatch::StCube cube;
    cube.dims = dims;
    for (int t = 0; t < dims.t; ++t) {
        skywatch::Patch p;
        p.pixels = random_image(dims.x, dims.y, rng);
        cube.slices.push_back(std::move(p));
    }
    cube.converged.assign(dims.t, true);
    cube.iterations.assign(dims.t, 0);
    return cube;
}

}  // namespace oracle
