#include "skywatch/motion_comp.hpp"

#include <cmath>
#include <stdexcept>

#include "skywatch/features.hpp"

namespace skywatch {

StCube plain_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims) {
    if (static_cast<int>(frames.size()) != dims.t) throw std::invalid_argument("cube needs exactly s_t frames");
    StCube cube;
    cube.dims = dims;
    cube.anchor = anchor;
    cube.slices.reserve(dims.t);
    for (const Frame* f : frames) cube.slices.push_back(extract_patch(*f, {anchor.i, anchor.j}, dims.spatial()));
    cube.converged.assign(dims.t, true);
    cube.iterations.assign(dims.t, 0);
    const Frame& last = *frames.back();
    cube.anchor_in_frame = anchor.i >= 0.0 && anchor.j >= 0.0 && anchor.i <= last.height() - 1 &&
                           anchor.j <= last.width() - 1;
    return cube;
}

StCube compensate_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims,
                       const ShiftPredictor& predictor, const CompensationConfig& config) {
    if (config.max_iter < 1 || !(config.epsilon > 0.0)) throw std::invalid_argument("invalid compensation config");
    StCube cube = plain_cube(frames, anchor, dims);
    for (int k = 0; k < dims.t; ++k) {
        const Frame& frame = *frames[k];
        PixelPos current{anchor.i, anchor.j};
        Patch patch = std::move(cube.slices[k]);
        bool converged = false;
        int calls = 0;
        while (calls < config.max_iter) {
            const ShiftPrediction shift = predictor(patch);
            ++calls;
            const PixelPos next{current.i - shift.v, current.j - shift.h};
            const double di = next.i - current.i;
            const double dj = next.j - current.j;
            current = next;
            patch = extract_patch(frame, current, dims.spatial());
            if (di * di + dj * dj < config.epsilon) {
                converged = true;
                break;
            }
        }
        cube.slices[k] = std::move(patch);
        cube.converged[k] = converged;
        cube.iterations[k] = calls;
    }
    return cube;
}

StCube compensate_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims,
                       const ShiftRegressor& regressor, const CompensationConfig& config) {
    if (regressor.patch_size != dims.spatial()) throw std::invalid_argument("regressor patch size does not match cube");
    // Regressor offsets are in patch pixels; cube slices are extracted at unit scale.
    return compensate_cube(
        frames, anchor, dims, [&](const Patch& p) { return predict_shift(regressor, p); }, config);
}

std::vector<const Frame*> cube_frames(std::span<const Frame> sequence, int anchor_t, int depth) {
    if (anchor_t < depth - 1) throw std::invalid_argument("not enough frames before the cube anchor");
    if (anchor_t >= static_cast<int>(sequence.size())) throw std::invalid_argument("cube anchor beyond the sequence");
    std::vector<const Frame*> out;
    for (int t = anchor_t - depth + 1; t <= anchor_t; ++t) out.push_back(&sequence[t]);
    return out;
}

StCube compensate_cube(std::span<const Frame> sequence, CubeAnchor anchor, CubeDims dims,
                       const ShiftRegressor& regressor, const CompensationConfig& config) {
    const auto frames = cube_frames(sequence, anchor.t, dims.t);
    return compensate_cube(frames, anchor, dims, regressor, config);
}

MotionEstimate estimate_motion(const StCube& cube, std::optional<double> fps, std::optional<double> object_size_m,
                               double object_size_px) {
    MotionEstimate m;
    const std::size_t n = cube.slices.size();
    for (std::size_t k = 0; k < n; ++k) m.centers.push_back(cube.center(static_cast<int>(k)));
    if (n >= 2) {
        const double mean_k = 0.5 * static_cast<double>(n - 1);
        double mean_i = 0.0, mean_j = 0.0;
        for (const auto& c : m.centers) {
            mean_i += c.i;
            mean_j += c.j;
        }
        mean_i /= static_cast<double>(n);
        mean_j /= static_cast<double>(n);
        double skk = 0.0, ski = 0.0, skj = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dk = static_cast<double>(k) - mean_k;
            skk += dk * dk;
            ski += dk * (m.centers[k].i - mean_i);
            skj += dk * (m.centers[k].j - mean_j);
        }
        if (skk > 0.0) m.velocity = {ski / skk, skj / skk};
    }
    if (fps && object_size_m && object_size_px > 0.0) {
        m.speed_m_per_s = std::hypot(m.velocity.i, m.velocity.j) * *fps * (*object_size_m / object_size_px);
    }
    return m;
}

}  // namespace skywatch
