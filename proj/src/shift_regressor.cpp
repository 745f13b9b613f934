#include "skywatch/shift_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "skywatch/binary_io.hpp"

namespace skywatch {

RegressionTree::RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("regression tree needs at least one node");
    const auto n = static_cast<std::int32_t>(nodes_.size());
    for (std::int32_t k = 0; k < n; ++k) {
        const Node& node = nodes_[k];
        if (node.is_leaf()) continue;
        if (node.left <= k || node.right <= k || node.left >= n || node.right >= n)
            throw std::invalid_argument("regression tree children must follow their parent");
    }
}

double RegressionTree::evaluate(std::span<const double> x) const {
    std::int32_t k = 0;
    while (!nodes_[k].is_leaf()) {
        const Node& node = nodes_[k];
        // Arithmetic select keeps the descent free of data-dependent branches.
        const std::int32_t go_right = !(x[node.feature] <= node.threshold);
        k = node.left + go_right * (node.right - node.left);
    }
    return nodes_[k].value;
}

int RegressionTree::depth() const {
    std::vector<int> d(nodes_.size(), 0);
    int deepest = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        deepest = std::max(deepest, d[k]);
        if (!nodes_[k].is_leaf()) {
            d[nodes_[k].left] = d[k] + 1;
            d[nodes_[k].right] = d[k] + 1;
        }
    }
    return deepest;
}

double BoostedEnsemble::predict(std::span<const double> x, double shrinkage) const {
    double sum = 0.0;
    for (const Stage& s : stages) sum += s.weight * s.tree.evaluate(x);
    return base_value + shrinkage * sum;
}

namespace {

// Column-major copy of the feature matrix with every column presorted once, so
// each tree level is found with one linear sweep per feature.
struct SortedColumns {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<std::uint32_t> order;  // dim x rows sample indices
    std::vector<double> values;        // dim x rows, aligned with order

    SortedColumns(std::span<const double> features, std::size_t n, std::size_t d) : rows(n), dim(d) {
        order.resize(n * d);
        values.resize(n * d);
        std::vector<std::uint32_t> idx(n);
        for (std::size_t f = 0; f < d; ++f) {
            std::iota(idx.begin(), idx.end(), 0u);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::uint32_t a, std::uint32_t b) { return features[a * d + f] < features[b * d + f]; });
            for (std::size_t k = 0; k < n; ++k) {
                order[f * n + k] = idx[k];
                values[f * n + k] = features[idx[k] * d + f];
            }
        }
    }
};

struct NodeStats {
    double grad = 0.0;    // sum of w * residual
    double weight = 0.0;  // sum of w
    int count = 0;
};

struct SplitChoice {
    double gain = 0.0;
    std::int32_t feature = -1;
    double threshold = 0.0;
};

// Grows one least-squares tree level by level. `leaf_of` receives the leaf
// value for every sample.
RegressionTree fit_tree(const SortedColumns& cols, std::span<const double> features, std::span<const double> residual,
                        std::span<const double> weights, const RegressorConfig& config, std::vector<double>& leaf_of) {
    const std::size_t n = cols.rows;
    const std::size_t dim = cols.dim;
    std::vector<RegressionTree::Node> nodes(1);
    std::vector<std::int32_t> node_of(n, 0);
    std::vector<std::int32_t> frontier{0};

    auto node_stats = [&] {
        std::vector<NodeStats> stats(nodes.size());
        for (std::size_t s = 0; s < n; ++s) {
            NodeStats& st = stats[node_of[s]];
            st.grad += weights[s] * residual[s];
            st.weight += weights[s];
            ++st.count;
        }
        return stats;
    };

    for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
        const std::vector<NodeStats> totals = node_stats();
        // Slot of each node within the frontier, -1 if the node is not being split.
        std::vector<std::int32_t> slot(nodes.size(), -1);
        for (std::size_t k = 0; k < frontier.size(); ++k) slot[frontier[k]] = static_cast<std::int32_t>(k);

        std::vector<SplitChoice> best(frontier.size());
        std::vector<NodeStats> left(frontier.size());
        std::vector<double> last(frontier.size());
        std::vector<char> has_last(frontier.size());

        for (std::size_t f = 0; f < dim; ++f) {
            std::fill(left.begin(), left.end(), NodeStats{});
            std::fill(has_last.begin(), has_last.end(), 0);
            const std::uint32_t* order = &cols.order[f * n];
            const double* values = &cols.values[f * n];
            for (std::size_t k = 0; k < n; ++k) {
                const std::uint32_t s = order[k];
                const std::int32_t q = slot[node_of[s]];
                if (q < 0) continue;
                const double v = values[k];
                NodeStats& l = left[q];
                if (has_last[q] && v > last[q]) {
                    const NodeStats& tot = totals[frontier[q]];
                    const int right_count = tot.count - l.count;
                    if (l.count >= config.min_leaf && right_count >= config.min_leaf) {
                        const double rg = tot.grad - l.grad;
                        const double rw = tot.weight - l.weight;
                        const double gain =
                            l.grad * l.grad / l.weight + rg * rg / rw - tot.grad * tot.grad / tot.weight;
                        if (gain > best[q].gain) {
                            double thr = 0.5 * (last[q] + v);
                            if (!(thr < v)) thr = last[q];
                            best[q] = {gain, static_cast<std::int32_t>(f), thr};
                        }
                    }
                }
                l.grad += weights[s] * residual[s];
                l.weight += weights[s];
                ++l.count;
                last[q] = v;
                has_last[q] = 1;
            }
        }

        std::vector<std::int32_t> next;
        for (std::size_t q = 0; q < frontier.size(); ++q) {
            // Gains below this are rounding noise on an already constant node.
            if (best[q].feature < 0 || best[q].gain <= 1e-12) continue;
            const std::int32_t id = frontier[q];
            nodes[id].feature = best[q].feature;
            nodes[id].threshold = best[q].threshold;
            nodes[id].left = static_cast<std::int32_t>(nodes.size());
            nodes[id].right = static_cast<std::int32_t>(nodes.size() + 1);
            nodes.emplace_back();
            nodes.emplace_back();
            next.push_back(nodes[id].left);
            next.push_back(nodes[id].right);
        }
        if (next.empty()) break;
        for (std::size_t s = 0; s < n; ++s) {
            const RegressionTree::Node& node = nodes[node_of[s]];
            if (node.is_leaf()) continue;
            node_of[s] = features[s * dim + node.feature] <= node.threshold ? node.left : node.right;
        }
        frontier = std::move(next);
    }

    const std::vector<NodeStats> totals = node_stats();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k].is_leaf()) nodes[k].value = totals[k].weight > 0.0 ? totals[k].grad / totals[k].weight : 0.0;
    }
    leaf_of.resize(n);
    for (std::size_t s = 0; s < n; ++s) leaf_of[s] = nodes[node_of[s]].value;
    return RegressionTree(std::move(nodes));
}

double mean_squared(std::span<const double> r) {
    double sum = 0.0;
    for (double v : r) sum += v * v;
    return sum / static_cast<double>(r.size());
}

}  // namespace

BoostedEnsemble fit_boosted_trees(std::span<const double> features, std::size_t dim, std::span<const double> targets,
                                  const RegressorConfig& config, std::vector<double>* losses) {
    if (targets.size() < 2) throw std::invalid_argument("boosting needs at least two samples");
    if (dim == 0 || features.size() != targets.size() * dim)
        throw std::invalid_argument("feature matrix does not match target count");
    if (config.rounds < 1 || config.max_depth < 0 || !(config.shrinkage > 0.0 && config.shrinkage <= 1.0) ||
        config.min_leaf < 1)
        throw std::invalid_argument("degenerate boosting config");

    const std::size_t n = targets.size();
    BoostedEnsemble model;
    model.base_value = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

    std::vector<double> residual(n);
    for (std::size_t s = 0; s < n; ++s) residual[s] = targets[s] - model.base_value;
    // Quadratic loss: the per-round sample weights from differentiating the
    // loss are uniform. Kept explicit for the tree fitter.
    const std::vector<double> weights(n, 1.0);

    if (losses) {
        losses->clear();
        losses->push_back(mean_squared(residual));
    }
    const SortedColumns cols(features, n, dim);
    std::vector<double> leaf_of;
    model.stages.reserve(config.rounds);
    for (int round = 0; round < config.rounds; ++round) {
        RegressionTree tree = fit_tree(cols, features, residual, weights, config, leaf_of);
        for (std::size_t s = 0; s < n; ++s) residual[s] -= config.shrinkage * leaf_of[s];
        model.stages.push_back({1.0, std::move(tree)});
        if (losses) losses->push_back(mean_squared(residual));
    }
    return model;
}

std::vector<ShiftSample> make_shift_samples(std::span<const ShiftAnnotation> annotations, std::span<const Frame> frames,
                                            std::uint64_t seed, const ShiftSampling& sampling) {
    if (sampling.patch_size.x < 1 || sampling.patch_size.y < 1) throw std::invalid_argument("invalid patch size");
    if (sampling.shifts_per_box < 1) throw std::invalid_argument("shifts_per_box must be positive");
    if (!(sampling.scale_jitter >= 1.0)) throw std::invalid_argument("scale_jitter must be >= 1");
    if (sampling.near_shifts_per_box < 0 || !(sampling.near_max_shift > 0.0))
        throw std::invalid_argument("invalid near-shift sampling");
    const double half = 0.5 * std::min(sampling.patch_size.x, sampling.patch_size.y);
    const double max_shift = sampling.max_shift < 0.0 ? half : std::min(sampling.max_shift, half);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(-max_shift, max_shift);
    const double near_shift = std::min(sampling.near_max_shift, max_shift);
    std::uniform_real_distribution<double> near(-near_shift, near_shift);
    std::uniform_real_distribution<double> log_jitter(-std::log(sampling.scale_jitter), std::log(sampling.scale_jitter));

    std::vector<ShiftSample> samples;
    for (const ShiftAnnotation& a : annotations) {
        if (a.frame % 2 != 0) continue;
        const auto frame = std::find_if(frames.begin(), frames.end(), [&](const Frame& f) { return f.index == a.frame; });
        if (frame == frames.end() || a.side <= 0.0 || a.center.i < 0.0 || a.center.j < 0.0 ||
            a.center.i > frame->height() - 1 || a.center.j > frame->width() - 1) {
            std::cerr << "warning: skipping annotation outside the frame sequence (frame " << a.frame << ")\n";
            continue;
        }
        const double box_scale = sampling.patch_size.x / a.side;
        for (int k = 0; k < sampling.shifts_per_box + sampling.near_shifts_per_box; ++k) {
            double scale = box_scale;
            if (sampling.scale_jitter > 1.0) scale *= std::exp(log_jitter(rng));
            // Object displacement inside the patch, in patch pixels.
            auto& draw = k < sampling.shifts_per_box ? shift : near;
            const double dh = draw(rng);
            const double dv = draw(rng);
            const PixelPos center{a.center.i - dv / scale, a.center.j - dh / scale};
            samples.push_back({extract_scaled_patch(*frame, center, sampling.patch_size, scale), -dh, -dv});
        }
    }
    return samples;
}

ShiftRegressor train_regressor(std::span<const ShiftSample> samples, const RegressorConfig& config,
                               const HogGeometry& geometry) {
    if (samples.size() < 2) throw std::invalid_argument("regressor training needs at least two samples");
    ShiftRegressor model;
    model.patch_size = {samples.front().patch.size_x(), samples.front().patch.size_y()};
    model.geometry = geometry;
    model.config = config;
    model.shrinkage = config.shrinkage;
    const std::size_t dim = model.descriptor_length();

    std::vector<double> features;
    features.reserve(samples.size() * dim);
    std::vector<double> target_h, target_v;
    for (const ShiftSample& s : samples) {
        if (s.patch.size_x() != model.patch_size.x || s.patch.size_y() != model.patch_size.y)
            throw std::invalid_argument("training patches differ in size");
        const HogDescriptor d = hog(s.patch, geometry);
        features.insert(features.end(), d.values.begin(), d.values.end());
        target_h.push_back(s.r_h);
        target_v.push_back(s.r_v);
    }
    model.horizontal = fit_boosted_trees(features, dim, target_h, config, &model.horizontal_loss);
    model.vertical = fit_boosted_trees(features, dim, target_v, config, &model.vertical_loss);
    return model;
}

ShiftPrediction predict_shift(const ShiftRegressor& model, std::span<const double> descriptor) {
    if (descriptor.size() != model.descriptor_length())
        throw std::invalid_argument("descriptor length does not match the regressor");
    const double hx = 0.5 * model.patch_size.x;
    const double hy = 0.5 * model.patch_size.y;
    return {std::clamp(model.horizontal.predict(descriptor, model.shrinkage), -hx, hx),
            std::clamp(model.vertical.predict(descriptor, model.shrinkage), -hy, hy)};
}

ShiftPrediction predict_shift(const ShiftRegressor& model, const Patch& patch) {
    if (patch.size_x() != model.patch_size.x || patch.size_y() != model.patch_size.y)
        throw std::invalid_argument("patch size does not match the regressor");
    return predict_shift(model, hog(patch, model.geometry).values);
}

namespace {

constexpr std::uint32_t kRegressorVersion = 1;
constexpr char kRegressorMagic[5] = "SWR1";

void write_ensemble(std::ostream& out, const BoostedEnsemble& e) {
    binio::write_f64(out, e.base_value);
    binio::write_u32(out, static_cast<std::uint32_t>(e.stages.size()));
    for (const auto& stage : e.stages) {
        binio::write_f64(out, stage.weight);
        const auto& nodes = stage.tree.nodes();
        binio::write_u32(out, static_cast<std::uint32_t>(nodes.size()));
        for (const auto& node : nodes) {
            binio::write_i32(out, node.feature);
            binio::write_f64(out, node.threshold);
            binio::write_i32(out, node.left);
            binio::write_i32(out, node.right);
            binio::write_f64(out, node.value);
        }
    }
}

BoostedEnsemble read_ensemble(std::istream& in, std::size_t dim) {
    BoostedEnsemble e;
    e.base_value = binio::read_f64(in);
    const std::uint32_t stages = binio::read_count(in, 1u << 24);
    e.stages.reserve(stages);
    for (std::uint32_t k = 0; k < stages; ++k) {
        const double weight = binio::read_f64(in);
        const std::uint32_t count = binio::read_count(in, 1u << 20);
        std::vector<RegressionTree::Node> nodes(count);
        for (auto& node : nodes) {
            node.feature = binio::read_i32(in);
            node.threshold = binio::read_f64(in);
            node.left = binio::read_i32(in);
            node.right = binio::read_i32(in);
            node.value = binio::read_f64(in);
            if (node.feature >= static_cast<std::int32_t>(dim))
                throw std::runtime_error("corrupt regressor: feature index out of range");
        }
        e.stages.push_back({weight, RegressionTree(std::move(nodes))});
    }
    return e;
}

void write_losses(std::ostream& out, const std::vector<double>& losses) {
    binio::write_u32(out, static_cast<std::uint32_t>(losses.size()));
    for (double v : losses) binio::write_f64(out, v);
}

std::vector<double> read_losses(std::istream& in) {
    std::vector<double> losses(binio::read_count(in, 1u << 24));
    for (double& v : losses) v = binio::read_f64(in);
    return losses;
}

}  // namespace

void save_regressor(std::ostream& out, const ShiftRegressor& m) {
    binio::write_magic(out, kRegressorMagic);
    binio::write_u32(out, kRegressorVersion);
    binio::write_i32(out, m.patch_size.x);
    binio::write_i32(out, m.patch_size.y);
    binio::write_i32(out, m.geometry.cell);
    binio::write_i32(out, m.geometry.block);
    binio::write_i32(out, m.geometry.block_stride);
    binio::write_i32(out, m.geometry.bins);
    binio::write_i32(out, m.config.rounds);
    binio::write_i32(out, m.config.max_depth);
    binio::write_f64(out, m.config.shrinkage);
    binio::write_i32(out, m.config.min_leaf);
    binio::write_f64(out, m.shrinkage);
    write_ensemble(out, m.horizontal);
    write_ensemble(out, m.vertical);
    write_losses(out, m.horizontal_loss);
    write_losses(out, m.vertical_loss);
    if (!out) throw std::runtime_error("failed writing regressor");
}

ShiftRegressor load_regressor(std::istream& in) {
    binio::expect_magic(in, kRegressorMagic);
    if (binio::read_u32(in) != kRegressorVersion) throw std::runtime_error("unsupported regressor version");
    ShiftRegressor m;
    m.patch_size.x = binio::read_i32(in);
    m.patch_size.y = binio::read_i32(in);
    m.geometry.cell = binio::read_i32(in);
    m.geometry.block = binio::read_i32(in);
    m.geometry.block_stride = binio::read_i32(in);
    m.geometry.bins = binio::read_i32(in);
    m.config.rounds = binio::read_i32(in);
    m.config.max_depth = binio::read_i32(in);
    m.config.shrinkage = binio::read_f64(in);
    m.config.min_leaf = binio::read_i32(in);
    m.shrinkage = binio::read_f64(in);
    const std::size_t dim = m.descriptor_length();
    m.horizontal = read_ensemble(in, dim);
    m.vertical = read_ensemble(in, dim);
    m.horizontal_loss = read_losses(in);
    m.vertical_loss = read_losses(in);
    return m;
}

void save_regressor(const std::filesystem::path& file, const ShiftRegressor& model) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    save_regressor(out, model);
}

ShiftRegressor load_regressor(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    return load_regressor(in);
}

}  // namespace skywatch
