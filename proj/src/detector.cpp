#include "skywatch/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <map>
#include <random>
#include <stdexcept>
#include <tuple>

#include "skywatch/parallel.hpp"

namespace skywatch {

void validate(const DetectorConfig& c) {
    if (c.dims.x < 3 || c.dims.y < 3 || c.dims.t < 1) throw std::invalid_argument("invalid cube dims");
    if (c.stride < 1) throw std::invalid_argument("stride must be positive");
    if (!(c.scale_step > 0.0 && c.scale_step < 1.0)) throw std::invalid_argument("scale_step must lie in (0, 1)");
    if (c.min_side < std::max(c.dims.x, c.dims.y)) throw std::invalid_argument("min_side must cover the window");
    if (!(c.upsample > 0.0)) throw std::invalid_argument("upsample must be positive");
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw std::invalid_argument("score threshold must lie in [0, 1]");
    if (!(c.nms_overlap > 0.0 && c.nms_overlap <= 1.0)) throw std::invalid_argument("NMS overlap must lie in (0, 1]");
}

std::vector<PyramidLevel> detection_pyramid(const Frame& frame, const DetectorConfig& config) {
    if (config.upsample == 1.0) return image_pyramid(frame, config.scale_step, config.min_side);
    const Frame base{resize(frame.pixels, config.upsample), frame.index};
    auto levels = image_pyramid(base, config.scale_step, config.min_side);
    for (auto& level : levels) level.scale *= config.upsample;
    return levels;
}

std::vector<PixelPos> grid_positions(int width, int height, CubeDims dims, int stride) {
    std::vector<PixelPos> out;
    const int hx = dims.x / 2;
    const int hy = dims.y / 2;
    for (int i = hy; i + (dims.y - hy) <= height; i += stride)
        for (int j = hx; j + (dims.x - hx) <= width; j += stride) out.push_back({static_cast<double>(i), static_cast<double>(j)});
    return out;
}

StCube window_cube(std::span<const Frame* const> level_frames, CubeAnchor anchor, const ShiftRegressor& regressor,
                   const DetectorConfig& config) {
    if (config.compensation) return compensate_cube(level_frames, anchor, config.dims, regressor, config.compensation_config);
    return plain_cube(level_frames, anchor, config.dims);
}

Detection window_detection(const StCube& cube, double scale, int level, int frame) {
    const PixelPos last = cube.center(cube.dims.t - 1);
    Detection d;
    d.frame = frame;
    d.center = {level_to_source(last.i, scale), level_to_source(last.j, scale)};
    d.side = cube.dims.x / scale;
    d.level = level;
    d.scale = scale;
    return d;
}

bool detection_order(const Detection& a, const Detection& b) {
    return std::tie(b.score, a.frame, a.center.i, a.center.j, a.scale) <
           std::tie(a.score, b.frame, b.center.i, b.center.j, b.scale);
}

std::vector<Detection> nms(std::vector<Detection> detections, double overlap_threshold) {
    std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        return std::tie(b.score, a.center.i, a.center.j, a.scale) < std::tie(a.score, b.center.i, b.center.j, b.scale);
    });
    std::vector<bool> removed(detections.size(), false);
    std::vector<Detection> kept;
    for (std::size_t a = 0; a < detections.size(); ++a) {
        if (removed[a]) continue;
        kept.push_back(detections[a]);
        for (std::size_t b = a + 1; b < detections.size(); ++b) {
            if (removed[b] || detections[b].frame != detections[a].frame) continue;
            if (iou(detections[a], detections[b]) > overlap_threshold) removed[b] = true;
        }
    }
    std::sort(kept.begin(), kept.end(), detection_order);
    return kept;
}

namespace {

// Pyramids of the frames currently covered by the cube window.
class PyramidWindow {
public:
    PyramidWindow(std::span<const Frame> frames, const DetectorConfig& config) : frames_(frames), config_(config) {}

    const std::vector<PyramidLevel>& at(int t) {
        auto it = cache_.find(t);
        if (it == cache_.end()) it = cache_.emplace(t, detection_pyramid(frames_[t], config_)).first;
        while (!cache_.empty() && cache_.begin()->first < t - config_.dims.t + 1) cache_.erase(cache_.begin());
        return it->second;
    }

    /// Level frames t - s_t + 1 .. t for every level.
    std::vector<std::vector<const Frame*>> cube_levels(int t) {
        std::vector<const std::vector<PyramidLevel>*> pyramids;
        for (int k = t - config_.dims.t + 1; k <= t; ++k) pyramids.push_back(&at(k));
        std::vector<std::vector<const Frame*>> out(pyramids.back()->size());
        for (std::size_t level = 0; level < out.size(); ++level)
            for (const auto* p : pyramids) out[level].push_back(&(*p)[level].frame);
        return out;
    }

    const std::vector<PyramidLevel>& levels(int t) { return at(t); }

private:
    std::span<const Frame> frames_;
    const DetectorConfig& config_;
    std::map<int, std::vector<PyramidLevel>> cache_;
};

struct Window {
    int level;
    PixelPos anchor;
};

bool intersects_frame(const Detection& d, int width, int height) {
    const double h = 0.5 * d.side;
    return d.center.j + h > 0.0 && d.center.j - h < width && d.center.i + h > 0.0 && d.center.i - h < height;
}

double best_iou(const Detection& d, std::span<const GroundTruthBox> boxes) {
    double best = 0.0;
    for (const GroundTruthBox& g : boxes)
        if (g.frame == d.frame) best = std::max(best, iou(d, g));
    return best;
}

}  // namespace

std::vector<Detection> detect(std::span<const Frame> frames, const ShiftRegressor& regressor,
                              const CubeClassifier& classifier, const DetectorConfig& config) {
    validate(config);
    if (classifier.dims != config.dims) throw std::invalid_argument("classifier dims do not match the detector config");
    if (config.compensation && regressor.patch_size != config.dims.spatial())
        throw std::invalid_argument("regressor patch size does not match the detector config");
    if (static_cast<int>(frames.size()) < config.dims.t) throw std::invalid_argument("too few frames for one cube");
    const int threads = resolve_threads(config.threads);

    PyramidWindow pyramids(frames, config);
    std::vector<Detection> all;
    for (int t = config.dims.t - 1; t < static_cast<int>(frames.size()); ++t) {
        const auto level_frames = pyramids.cube_levels(t);
        const auto& levels = pyramids.levels(t);
        std::vector<Window> windows;
        for (std::size_t l = 0; l < levels.size(); ++l)
            for (const PixelPos& p : grid_positions(levels[l].frame.width(), levels[l].frame.height(), config.dims, config.stride))
                windows.push_back({static_cast<int>(l), p});

        std::vector<std::optional<Detection>> results(windows.size());
        parallel_for(windows.size(), threads, [&](std::size_t w) {
            const Window& win = windows[w];
            const StCube cube = window_cube(level_frames[win.level], {win.anchor.i, win.anchor.j, t}, regressor, config);
            const double score = score_cube(classifier, cube);
            if (score < config.threshold) return;
            const double scale = levels[win.level].scale;
            Detection d = window_detection(cube, scale, win.level, frames[t].index);
            d.score = score;
            if (config.compensation) {
                const MotionEstimate motion = estimate_motion(cube);
                d.velocity = PixelPos{motion.velocity.i / scale, motion.velocity.j / scale};
            }
            if (intersects_frame(d, frames[t].width(), frames[t].height())) results[w] = d;
        });

        std::vector<Detection> frame_detections;
        for (auto& r : results)
            if (r) frame_detections.push_back(*r);
        for (Detection& d : nms(std::move(frame_detections), config.nms_overlap)) all.push_back(d);
    }
    std::sort(all.begin(), all.end(), detection_order);
    return all;
}

LabeledCubes collect_training_cubes(std::span<const Frame> frames, std::span<const GroundTruthBox> ground_truth,
                                    const ShiftRegressor& regressor, const DetectorConfig& config,
                                    const DetectorTraining& training) {
    validate(config);
    if (training.frame_step < 1 || training.positives_per_box < 0 || training.negatives_per_frame < 0 ||
        training.near_negatives_per_box < 0)
        throw std::invalid_argument("invalid detector training config");
    if (static_cast<int>(frames.size()) < config.dims.t) throw std::invalid_argument("too few frames for one cube");
    const int threads = resolve_threads(config.threads);
    std::mt19937_64 rng(training.seed);
    const double jitter = 0.5 * config.stride;
    std::uniform_real_distribution<double> offset(-jitter, jitter);

    PyramidWindow pyramids(frames, config);
    LabeledCubes out;
    for (int t = config.dims.t - 1; t < static_cast<int>(frames.size()); t += training.frame_step) {
        const auto level_frames = pyramids.cube_levels(t);
        const auto& levels = pyramids.levels(t);
        const int frame_index = frames[t].index;

        std::vector<Window> windows;
        for (const GroundTruthBox& g : ground_truth) {
            if (g.frame != frame_index) continue;
            for (std::size_t l = 0; l < levels.size(); ++l) {
                const double apparent = g.side * levels[l].scale;
                if (apparent < config.dims.x / 1.25 || apparent > config.dims.x * 1.25) continue;
                for (int k = 0; k < training.positives_per_box; ++k) {
                    const double di = offset(rng);
                    const double dj = offset(rng);
                    windows.push_back({static_cast<int>(l), {source_to_level(g.center.i, levels[l].scale) + di,
                                                             source_to_level(g.center.j, levels[l].scale) + dj}});
                }
            }
            std::uniform_int_distribution<int> any_level(0, static_cast<int>(levels.size()) - 1);
            std::uniform_real_distribution<double> radius(0.5 * config.dims.x, 1.5 * config.dims.x);
            std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
            for (int k = 0; k < training.near_negatives_per_box; ++k) {
                const int l = any_level(rng);
                const double r = radius(rng);
                const double a = angle(rng);
                windows.push_back({l, {source_to_level(g.center.i, levels[l].scale) + r * std::sin(a),
                                       source_to_level(g.center.j, levels[l].scale) + r * std::cos(a)}});
            }
        }
        std::vector<Window> grid;
        for (std::size_t l = 0; l < levels.size(); ++l)
            for (const PixelPos& p : grid_positions(levels[l].frame.width(), levels[l].frame.height(), config.dims, config.stride))
                grid.push_back({static_cast<int>(l), p});
        if (!grid.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
            for (int k = 0; k < training.negatives_per_frame; ++k) windows.push_back(grid[pick(rng)]);
        }

        std::vector<StCube> cubes(windows.size());
        std::vector<int> labels(windows.size(), 0);
        parallel_for(windows.size(), threads, [&](std::size_t w) {
            const Window& win = windows[w];
            cubes[w] = window_cube(level_frames[win.level], {win.anchor.i, win.anchor.j, t}, regressor, config);
            const Detection d = window_detection(cubes[w], levels[win.level].scale, win.level, frame_index);
            const double overlap = best_iou(d, ground_truth);
            if (overlap >= training.positive_iou) labels[w] = 1;
            else if (overlap < training.negative_iou) labels[w] = -1;
        });
        for (std::size_t w = 0; w < windows.size(); ++w) {
            if (labels[w] == 0) continue;
            out.cubes.push_back(std::move(cubes[w]));
            out.labels.push_back(labels[w]);
        }
    }
    return out;
}

CubeClassifier train_detector(std::span<const Frame> frames, std::span<const GroundTruthBox> ground_truth,
                              const ShiftRegressor& regressor, const DetectorConfig& config,
                              const DetectorTraining& training, AdaBoostTrace* trace) {
    const LabeledCubes set = collect_training_cubes(frames, ground_truth, regressor, config, training);
    AdaBoostConfig boost = training.boost;
    boost.threads = config.threads;
    CubeClassifier model = train_adaboost(set.cubes, set.labels, boost, trace);
    model.compensated = config.compensation;
    return model;
}

}  // namespace skywatch

namespace skywatch {

std::vector<CenteringResult> centering_study(std::span<const Frame> frames,
                                             std::span<const GroundTruthBox> ground_truth,
                                             const ShiftRegressor& regressor, const DetectorConfig& config,
                                             int count, double max_shift, std::uint64_t seed) {
    validate(config);
    std::vector<std::size_t> eligible;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        const int f = ground_truth[g].frame;
        if (f >= config.dims.t - 1 && f < static_cast<int>(frames.size())) eligible.push_back(g);
    }
    if (eligible.empty() || count < 1) return {};

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    std::uniform_real_distribution<double> shift(-max_shift, max_shift);
    struct Job {
        std::size_t gt;
        double di, dj;
    };
    std::vector<Job> jobs;
    for (int k = 0; k < count; ++k) {
        const std::size_t g = eligible[pick(rng)];
        const double di = shift(rng);
        const double dj = shift(rng);
        jobs.push_back({g, di, dj});
    }
    // Sorting by frame keeps the pyramid cache warm; results stay in job order.
    std::vector<std::size_t> order(jobs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ground_truth[jobs[a].gt].frame < ground_truth[jobs[b].gt].frame; });

    // Position of the same target in an earlier frame: nearest box in that frame.
    auto true_center = [&](int frame, PixelPos near) {
        PixelPos best = near;
        double best_d = std::numeric_limits<double>::infinity();
        for (const GroundTruthBox& g : ground_truth) {
            if (g.frame != frame) continue;
            const double d = std::hypot(g.center.i - near.i, g.center.j - near.j);
            if (d < best_d) {
                best_d = d;
                best = g.center;
            }
        }
        return best;
    };

    const int threads = resolve_threads(config.threads);
    PyramidWindow pyramids(frames, config);
    std::vector<CenteringResult> results(jobs.size());
    std::size_t k = 0;
    while (k < order.size()) {
        const int t = ground_truth[jobs[order[k]].gt].frame;
        std::size_t end = k;
        while (end < order.size() && ground_truth[jobs[order[end]].gt].frame == t) ++end;
        const auto level_frames = pyramids.cube_levels(t);
        const auto& levels = pyramids.levels(t);
        parallel_for(end - k, threads, [&](std::size_t q) {
            const std::size_t job_index = order[k + q];
            const Job& job = jobs[job_index];
            const GroundTruthBox& g = ground_truth[job.gt];
            std::size_t level = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < levels.size(); ++l) {
                const double miss = std::abs(std::log(g.side * levels[l].scale / config.dims.x));
                if (miss < best) {
                    best = miss;
                    level = l;
                }
            }
            const double scale = levels[level].scale;
            const CubeAnchor anchor{source_to_level(g.center.i, scale) + job.di,
                                    source_to_level(g.center.j, scale) + job.dj, t};
            const StCube before = plain_cube(level_frames[level], anchor, config.dims);
            const StCube after =
                compensate_cube(level_frames[level], anchor, config.dims, regressor, config.compensation_config);
            CenteringResult r;
            r.anchor_box = g;
            r.level = static_cast<int>(level);
            r.scale = scale;
            r.slices = config.dims.t;
            PixelPos track = g.center;
            for (int s = config.dims.t - 1; s >= 0; --s) {
                const int frame = t - config.dims.t + 1 + s;
                track = true_center(frame, track);
                const double ti = source_to_level(track.i, scale);
                const double tj = source_to_level(track.j, scale);
                r.error_before += std::hypot(before.center(s).i - ti, before.center(s).j - tj);
                r.error_after += std::hypot(after.center(s).i - ti, after.center(s).j - tj);
                if (after.converged[s]) ++r.converged_slices;
            }
            r.error_before /= config.dims.t;
            r.error_after /= config.dims.t;
            results[job_index] = r;
        });
        k = end;
    }
    return results;
}

}  // namespace skywatch
