#include "skywatch/cube_classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "skywatch/binary_io.hpp"
#include "skywatch/parallel.hpp"

namespace skywatch {

std::string to_string(FeatureMode mode) { return mode == FeatureMode::Hog3d ? "3d-hog" : "gradient-energy"; }

FeatureMode parse_feature_mode(const std::string& text) {
    if (text == "gradient-energy") return FeatureMode::GradientEnergy;
    if (text == "3d-hog") return FeatureMode::Hog3d;
    throw std::invalid_argument("unknown feature mode: " + text);
}

namespace {

constexpr double kMinError = 1e-10;

struct Stump {
    double error = std::numeric_limits<double>::infinity();
    double threshold = 0.0;
    int polarity = 1;
};

// Stable ascending order of non-negative values: LSD radix sort on the IEEE
// bit patterns, which order like the values themselves when the sign is clear.
void stable_order(std::span<const double> values, std::vector<std::uint32_t>& order) {
    const std::size_t n = values.size();
    thread_local std::vector<std::uint64_t> keys, key_tmp;
    thread_local std::vector<std::uint32_t> tmp;
    keys.resize(n);
    key_tmp.resize(n);
    tmp.resize(n);
    order.resize(n);
    bool all_non_negative = true;
    for (std::size_t s = 0; s < n; ++s) {
        keys[s] = std::bit_cast<std::uint64_t>(values[s] + 0.0);
        all_non_negative = all_non_negative && !(values[s] < 0.0) && !std::isnan(values[s]);
        order[s] = static_cast<std::uint32_t>(s);
    }
    if (!all_non_negative) {
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return values[a] < values[b]; });
        return;
    }
    constexpr int kDigit = 11;
    constexpr std::uint64_t kMask = (1u << kDigit) - 1;
    std::vector<std::uint32_t> count(std::size_t{1} << kDigit);
    for (int shift = 0; shift < 64; shift += kDigit) {
        std::fill(count.begin(), count.end(), 0u);
        for (std::size_t s = 0; s < n; ++s) ++count[(keys[s] >> shift) & kMask];
        if (count[(keys[0] >> shift) & kMask] == n) continue;
        std::uint32_t running = 0;
        for (auto& c : count) {
            const std::uint32_t here = c;
            c = running;
            running += here;
        }
        for (std::size_t s = 0; s < n; ++s) {
            const std::uint32_t slot = count[(keys[s] >> shift) & kMask]++;
            key_tmp[slot] = keys[s];
            tmp[slot] = order[s];
        }
        keys.swap(key_tmp);
        order.swap(tmp);
    }
}

// Best threshold/polarity for one feature column. Positions between distinct
// sorted values use the midpoint; the last position puts every sample below
// the threshold (constant classifiers).
Stump best_stump(std::span<const double> values, std::span<const int> labels, std::span<const double> weights,
                 std::vector<std::uint32_t>& order) {
    const std::size_t n = values.size();
    stable_order(values, order);

    double positive_total = 0.0;
    for (std::size_t s = 0; s < n; ++s)
        if (labels[s] > 0) positive_total += weights[s];

    // err_plus = weight of positives at or below the threshold + negatives above it.
    double pos_below = 0.0;
    double neg_below = 0.0;
    double neg_total = 0.0;
    for (std::size_t s = 0; s < n; ++s)
        if (labels[s] <= 0) neg_total += weights[s];

    Stump best;
    for (std::size_t k = 1; k <= n; ++k) {
        const std::uint32_t s = order[k - 1];
        if (labels[s] > 0) pos_below += weights[s];
        else neg_below += weights[s];
        if (k < n && !(values[order[k - 1]] < values[order[k]])) continue;
        double threshold;
        if (k == n) {
            threshold = values[order[n - 1]];
        } else {
            threshold = 0.5 * (values[order[k - 1]] + values[order[k]]);
            if (!(threshold < values[order[k]])) threshold = values[order[k - 1]];
        }
        threshold = std::clamp(threshold, 0.0, 1.0);
        const double err_plus = pos_below + (neg_total - neg_below);
        const double err_minus = (positive_total - pos_below) + neg_below;
        if (err_plus < best.error) best = {err_plus, threshold, 1};
        if (err_minus < best.error) best = {err_minus, threshold, -1};
    }
    return best;
}

CubeBox random_box(std::mt19937_64& rng, const CubeDims& dims, int bins, int min_side) {
    const int side_x = std::min(min_side, dims.x);
    const int side_y = std::min(min_side, dims.y);
    auto draw = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    CubeBox b;
    b.x0 = draw(0, dims.x - side_x);
    b.x1 = draw(b.x0 + side_x, dims.x);
    b.y0 = draw(0, dims.y - side_y);
    b.y1 = draw(b.y0 + side_y, dims.y);
    b.t0 = draw(0, dims.t - 1);
    b.t1 = draw(b.t0 + 1, dims.t);
    b.orientation = draw(0, bins - 1);
    return b;
}

double normalized_vote(const CubeClassifier& model, const auto& fires) {
    double vote = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < model.learners.size(); ++k) {
        const double a = model.learners[k].alpha;
        if (fires(k)) vote += a;
        total += std::max(a, 0.0);
    }
    if (total <= 0.0) return 0.0;
    return std::clamp(vote / total, 0.0, 1.0);
}

}  // namespace

double learner_value(const WeakLearner& learner, const ChannelVolume& channels) {
    return gradient_energy(channels, learner.box);
}

CubeClassifier train_adaboost(std::span<const StCube> cubes, std::span<const int> labels, const AdaBoostConfig& config,
                              AdaBoostTrace* trace) {
    if (cubes.empty() || cubes.size() != labels.size()) throw std::invalid_argument("cubes and labels must align");
    if (config.rounds < 1) throw std::invalid_argument("AdaBoost needs at least one round");
    if (config.pool_size < 1) throw std::invalid_argument("candidate pool must be non-empty");
    const bool has_pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y > 0; });
    const bool has_neg = std::any_of(labels.begin(), labels.end(), [](int y) { return y <= 0; });
    if (!has_pos || !has_neg) throw std::invalid_argument("AdaBoost needs both positive and negative cubes");
    for (int y : labels)
        if (y != 1 && y != -1) throw std::invalid_argument("labels must be +1 or -1");

    CubeClassifier model;
    model.mode = config.mode;
    model.dims = cubes.front().dims;
    for (const StCube& c : cubes)
        if (c.dims != model.dims) throw std::invalid_argument("training cubes differ in dims");

    const std::size_t n = cubes.size();
    const int threads = resolve_threads(config.threads);

    std::vector<ChannelVolume> channels;
    std::vector<std::vector<double>> descriptors;
    std::size_t descriptor_len = 0;
    if (config.mode == FeatureMode::GradientEnergy) {
        channels.resize(n);
        parallel_for(n, threads, [&](std::size_t s) { channels[s] = build_channels(cubes[s], model.bins); });
    } else {
        descriptors.resize(n);
        parallel_for(n, threads, [&](std::size_t s) { descriptors[s] = hog3d(cubes[s], model.hog_geometry).values; });
        descriptor_len = descriptors.front().size();
    }

    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<double> margin(n, 0.0);  // sum_j alpha_j * h_j(b) with h in {-1,+1}
    std::mt19937_64 rng(config.seed);
    const std::size_t pool = static_cast<std::size_t>(config.pool_size);

    for (int round = 0; round < config.rounds; ++round) {
        std::vector<WeakLearner> candidates(pool);
        for (auto& c : candidates) {
            if (config.mode == FeatureMode::GradientEnergy) {
                c.box = random_box(rng, model.dims, model.bins, config.min_box_side);
            } else {
                c.component =
                    std::uniform_int_distribution<std::int32_t>(0, static_cast<std::int32_t>(descriptor_len) - 1)(rng);
            }
        }

        // Feature matrix filled cube by cube so each cube's channel volume stays
        // cached across the whole pool; row c holds candidate c over all cubes.
        // Rows are written per cube and transposed in tiles afterwards.
        std::vector<double> by_cube(pool * n);
        if (config.mode == FeatureMode::GradientEnergy) {
            std::vector<EnergyProbe> probes;
            probes.reserve(pool);
            for (const auto& c : candidates) probes.emplace_back(model.dims, model.bins, c.box);
            parallel_for(n, threads, [&](std::size_t s) {
                double* row = by_cube.data() + s * pool;
                for (std::size_t c = 0; c < pool; ++c) row[c] = probes[c](channels[s]);
            });
        } else {
            parallel_for(n, threads, [&](std::size_t s) {
                double* row = by_cube.data() + s * pool;
                for (std::size_t c = 0; c < pool; ++c) row[c] = descriptors[s][candidates[c].component];
            });
        }
        std::vector<double> matrix(pool * n);
        constexpr std::size_t kTile = 32;
        for (std::size_t s0 = 0; s0 < n; s0 += kTile)
            for (std::size_t c0 = 0; c0 < pool; c0 += kTile)
                for (std::size_t s = s0; s < std::min(n, s0 + kTile); ++s)
                    for (std::size_t c = c0; c < std::min(pool, c0 + kTile); ++c) matrix[c * n + s] = by_cube[s * pool + c];
        std::vector<Stump> stumps(pool);
        std::vector<std::vector<std::uint32_t>> order_of(threads);
        const std::size_t chunks = static_cast<std::size_t>(threads);
        parallel_for(chunks, threads, [&](std::size_t w) {
            for (std::size_t c = pool * w / chunks; c < pool * (w + 1) / chunks; ++c)
                stumps[c] = best_stump(std::span<const double>(matrix.data() + c * n, n), labels, weights, order_of[w]);
        });

        // Lowest error wins, then lowest candidate index.
        std::size_t best = 0;
        for (std::size_t c = 1; c < pool; ++c)
            if (stumps[c].error < stumps[best].error) best = c;

        WeakLearner learner = candidates[best];
        learner.threshold = stumps[best].threshold;
        learner.polarity = stumps[best].polarity;
        const double raw_error = stumps[best].error;
        const double eps = std::clamp(raw_error, kMinError, 1.0 - kMinError);
        const bool degenerate = raw_error >= 0.5 - 1e-12;
        learner.alpha = degenerate ? 0.0 : 0.5 * std::log((1.0 - eps) / eps);
        model.learners.push_back(learner);

        double weight_sum = 0.0;
        int mistakes = 0;
        for (std::size_t s = 0; s < n; ++s) {
            const double value = config.mode == FeatureMode::GradientEnergy
                                     ? gradient_energy(channels[s], learner.box)
                                     : descriptors[s][learner.component];
            const double h = learner.fires(value) ? 1.0 : -1.0;
            margin[s] += learner.alpha * h;
            weights[s] *= std::exp(-learner.alpha * labels[s] * h);
            weight_sum += weights[s];
            const int predicted = margin[s] >= 0.0 ? 1 : -1;
            if (predicted != labels[s]) ++mistakes;
        }
        for (double& w : weights) w /= weight_sum;

        if (trace) {
            trace->weighted_errors.push_back(eps);
            trace->training_errors.push_back(static_cast<double>(mistakes) / static_cast<double>(n));
        }
        if (degenerate) {
            std::cerr << "warning: AdaBoost halted after round " << round + 1
                      << ": no candidate beats chance (weighted error " << raw_error << ")\n";
            if (trace) trace->halted_early = true;
            break;
        }
    }
    return model;
}

double score_channels(const CubeClassifier& model, const ChannelVolume& channels) {
    return normalized_vote(model, [&](std::size_t k) {
        const WeakLearner& l = model.learners[k];
        return l.fires(gradient_energy(channels, l.box));
    });
}

double score_descriptor(const CubeClassifier& model, std::span<const double> values) {
    return normalized_vote(model, [&](std::size_t k) {
        const WeakLearner& l = model.learners[k];
        if (l.component < 0 || static_cast<std::size_t>(l.component) >= values.size())
            throw std::invalid_argument("3d-hog learner component out of range");
        return l.fires(values[l.component]);
    });
}

double score_cube(const CubeClassifier& model, const StCube& cube) {
    if (cube.dims != model.dims) throw std::invalid_argument("cube dims do not match the classifier");
    if (model.mode == FeatureMode::Hog3d) return score_descriptor(model, hog3d(cube, model.hog_geometry).values);
    return score_channels(model, build_channels(cube, model.bins));
}

namespace {

constexpr std::uint32_t kClassifierVersion = 1;
constexpr char kClassifierMagic[5] = "SWC1";

}  // namespace

void save_classifier(std::ostream& out, const CubeClassifier& m) {
    binio::write_magic(out, kClassifierMagic);
    binio::write_u32(out, kClassifierVersion);
    binio::write_u32(out, static_cast<std::uint32_t>(m.mode));
    binio::write_i32(out, m.dims.x);
    binio::write_i32(out, m.dims.y);
    binio::write_i32(out, m.dims.t);
    binio::write_i32(out, m.bins);
    binio::write_i32(out, m.hog_geometry.cell);
    binio::write_i32(out, m.hog_geometry.block);
    binio::write_i32(out, m.hog_geometry.block_stride);
    binio::write_i32(out, m.hog_geometry.bins);
    binio::write_u32(out, m.compensated ? 1u : 0u);
    binio::write_u32(out, static_cast<std::uint32_t>(m.learners.size()));
    for (const WeakLearner& l : m.learners) {
        for (int v : {l.box.x0, l.box.x1, l.box.y0, l.box.y1, l.box.t0, l.box.t1, l.box.orientation})
            binio::write_i32(out, v);
        binio::write_i32(out, l.component);
        binio::write_f64(out, l.threshold);
        binio::write_i32(out, l.polarity);
        binio::write_f64(out, l.alpha);
    }
    if (!out) throw std::runtime_error("failed writing classifier");
}

CubeClassifier load_classifier(std::istream& in) {
    binio::expect_magic(in, kClassifierMagic);
    if (binio::read_u32(in) != kClassifierVersion) throw std::runtime_error("unsupported classifier version");
    CubeClassifier m;
    const std::uint32_t mode = binio::read_u32(in);
    if (mode > 1) throw std::runtime_error("corrupt classifier: unknown feature mode");
    m.mode = static_cast<FeatureMode>(mode);
    m.dims.x = binio::read_i32(in);
    m.dims.y = binio::read_i32(in);
    m.dims.t = binio::read_i32(in);
    m.bins = binio::read_i32(in);
    m.hog_geometry.cell = binio::read_i32(in);
    m.hog_geometry.block = binio::read_i32(in);
    m.hog_geometry.block_stride = binio::read_i32(in);
    m.hog_geometry.bins = binio::read_i32(in);
    m.compensated = binio::read_u32(in) != 0;
    const std::uint32_t count = binio::read_count(in, 1u << 24);
    if (count == 0) throw std::runtime_error("corrupt classifier: empty ensemble");
    m.learners.resize(count);
    for (WeakLearner& l : m.learners) {
        l.box.x0 = binio::read_i32(in);
        l.box.x1 = binio::read_i32(in);
        l.box.y0 = binio::read_i32(in);
        l.box.y1 = binio::read_i32(in);
        l.box.t0 = binio::read_i32(in);
        l.box.t1 = binio::read_i32(in);
        l.box.orientation = binio::read_i32(in);
        l.component = binio::read_i32(in);
        l.threshold = binio::read_f64(in);
        l.polarity = binio::read_i32(in);
        l.alpha = binio::read_f64(in);
        if (m.mode == FeatureMode::GradientEnergy && !box_inside(l.box, m.dims, m.bins))
            throw std::runtime_error("corrupt classifier: learner box outside the cube");
    }
    return m;
}

void save_classifier(const std::filesystem::path& file, const CubeClassifier& model) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    save_classifier(out, model);
}

CubeClassifier load_classifier(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    return load_classifier(in);
}

}  // namespace skywatch
