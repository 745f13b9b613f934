#include "skywatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace skywatch {

int orientation_bin(double angle, int bins) {
    const int b = static_cast<int>(std::floor(angle / (std::numbers::pi / bins) + 0.5));
    return ((b % bins) + bins) % bins;
}

namespace {

struct CellGrid {
    int cells_x;
    int cells_y;
    int blocks_x;
    int blocks_y;
};

CellGrid cell_grid(PatchSize size, const HogGeometry& g) {
    if (g.cell < 1 || g.block < 1 || g.block_stride < 1 || g.bins < 1)
        throw std::invalid_argument("invalid HoG geometry");
    if (size.x % g.cell != 0 || size.y % g.cell != 0)
        throw std::invalid_argument("patch size is not a multiple of the HoG cell size");
    CellGrid grid{size.x / g.cell, size.y / g.cell, 0, 0};
    if (grid.cells_x < g.block || grid.cells_y < g.block)
        throw std::invalid_argument("patch too small for one HoG block");
    grid.blocks_x = (grid.cells_x - g.block) / g.block_stride + 1;
    grid.blocks_y = (grid.cells_y - g.block) / g.block_stride + 1;
    return grid;
}

void accumulate_cells(const std::vector<double>& magnitude, const std::vector<int>& bin, int width, int height,
                      const HogGeometry& g, int stride, std::vector<double>& cells) {
    const int cells_x = width / g.cell;
    for (int r = 0; r < height; ++r) {
        double* cell_row = &cells[static_cast<std::size_t>(r / g.cell) * cells_x * stride];
        for (int c = 0; c < width; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * width + c;
            cell_row[(c / g.cell) * stride + bin[p]] += magnitude[p];
        }
    }
}

HogDescriptor normalize_blocks(const std::vector<double>& cells, const CellGrid& grid, const HogGeometry& g,
                               int stride) {
    HogDescriptor d;
    d.cells_x = grid.cells_x;
    d.cells_y = grid.cells_y;
    d.blocks_x = grid.blocks_x;
    d.blocks_y = grid.blocks_y;
    d.bins = stride;
    const std::size_t block_len = static_cast<std::size_t>(g.block) * g.block * stride;
    d.values.reserve(block_len * grid.blocks_x * grid.blocks_y);
    for (int by = 0; by < grid.blocks_y; ++by) {
        for (int bx = 0; bx < grid.blocks_x; ++bx) {
            const std::size_t start = d.values.size();
            for (int cy = 0; cy < g.block; ++cy) {
                for (int cx = 0; cx < g.block; ++cx) {
                    const int cell_y = by * g.block_stride + cy;
                    const int cell_x = bx * g.block_stride + cx;
                    const double* h = &cells[(static_cast<std::size_t>(cell_y) * grid.cells_x + cell_x) * stride];
                    d.values.insert(d.values.end(), h, h + stride);
                }
            }
            double norm = 0.0;
            for (std::size_t k = start; k < d.values.size(); ++k) norm += d.values[k] * d.values[k];
            norm = std::sqrt(norm) + kHogEpsilon;
            for (std::size_t k = start; k < d.values.size(); ++k) d.values[k] /= norm;
        }
    }
    return d;
}

}  // namespace

std::size_t hog_length(PatchSize size, const HogGeometry& geometry, int extra_bins) {
    const CellGrid grid = cell_grid(size, geometry);
    return static_cast<std::size_t>(grid.blocks_x) * grid.blocks_y * geometry.block * geometry.block *
           (geometry.bins + extra_bins);
}

namespace {

// Bin lookup without atan2. The pseudo-angle 1 - x / (|x| + y) is monotone in
// the unsigned direction, so a fine table over it resolves the bin directly;
// table cells that straddle a bin boundary fall back to exact cross products
// against the boundary directions.
class BinLookup {
public:
    explicit BinLookup(int bins) : bins_(bins), cos_(bins), sin_(bins), table_(kCells) {
        std::vector<double> edges(bins);
        for (int k = 0; k < bins; ++k) {
            const double phi = (k + 0.5) * std::numbers::pi / bins;
            cos_[k] = std::cos(phi);
            sin_[k] = std::sin(phi);
            edges[k] = pseudo_angle(cos_[k], sin_[k]);
        }
        for (int cell = 0; cell < kCells; ++cell) {
            const double lo = 2.0 * cell / kCells;
            const double hi = 2.0 * (cell + 1) / kCells;
            int below = 0;
            bool straddles = false;
            for (double e : edges) {
                if (e < lo - 1e-9) ++below;
                else if (e <= hi + 1e-9) straddles = true;
            }
            table_[cell] = straddles ? -1 : (below == bins ? 0 : below);
        }
    }

    int bins() const { return bins_; }

    int operator()(double gx, double gy) const {
        const double sign = (gy < 0.0) | ((gy == 0.0) & (gx < 0.0)) ? -1.0 : 1.0;
        gx *= sign;
        gy *= sign;
        const int cell = std::min(static_cast<int>(pseudo_angle(gx, gy) * (kCells / 2)), kCells - 1);
        const int b = table_[cell];
        if (b >= 0) return b;
        int past = 0;
        for (int k = 0; k < bins_; ++k) past += cos_[k] * gy - sin_[k] * gx >= 0.0;
        return past == bins_ ? 0 : past;
    }

private:
    static constexpr int kCells = 4096;

    static double pseudo_angle(double x, double y) { return 1.0 - x / (std::abs(x) + y); }

    int bins_;
    std::vector<double> cos_;
    std::vector<double> sin_;
    std::vector<int> table_;
};

const BinLookup& bin_lookup(int bins) {
    thread_local std::unique_ptr<BinLookup> cached;
    if (!cached || cached->bins() != bins) cached = std::make_unique<BinLookup>(bins);
    return *cached;
}

// Central-difference gradient magnitude and orientation bin per pixel,
// one-sided at the borders (same stencil as spatial_gradients).
void magnitude_and_bins(const GrayImage& image, int bins, std::vector<double>& magnitude, std::vector<int>& bin) {
    const int w = image.width();
    const int h = image.height();
    if (w < 3 || h < 3) throw std::invalid_argument("gradients need at least a 3x3 patch");
    const BinLookup& lookup = bin_lookup(bins);
    magnitude.resize(static_cast<std::size_t>(w) * h);
    bin.resize(magnitude.size());
    const double* px = image.values().data();
    for (int r = 0; r < h; ++r) {
        const double* row = px + static_cast<std::size_t>(r) * w;
        const double* up = r == 0 ? row : row - w;
        const double* down = r == h - 1 ? row : row + w;
        const double fy = (r == 0 || r == h - 1) ? 1.0 : 0.5;
        for (int c = 0; c < w; ++c) {
            double dx;
            if (c == 0) dx = row[1] - row[0];
            else if (c == w - 1) dx = row[w - 1] - row[w - 2];
            else dx = 0.5 * (row[c + 1] - row[c - 1]);
            const double dy = fy * (down[c] - up[c]);
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            magnitude[p] = std::sqrt(dx * dx + dy * dy);
            bin[p] = magnitude[p] == 0.0 ? 0 : lookup(dx, dy);
        }
    }
}

}  // namespace

HogDescriptor hog(const GrayImage& image, const HogGeometry& geometry) {
    const CellGrid grid = cell_grid({image.width(), image.height()}, geometry);
    thread_local std::vector<double> magnitude;
    thread_local std::vector<int> bin;
    magnitude_and_bins(image, geometry.bins, magnitude, bin);
    std::vector<double> cells(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * geometry.bins, 0.0);
    accumulate_cells(magnitude, bin, image.width(), image.height(), geometry, geometry.bins, cells);
    return normalize_blocks(cells, grid, geometry, geometry.bins);
}

HogDescriptor hog3d(const StCube& cube, const HogGeometry& geometry) {
    if (cube.slices.empty()) throw std::invalid_argument("hog3d needs a non-empty cube");
    const CellGrid grid = cell_grid(cube.dims.spatial(), geometry);
    const int stride = geometry.bins + kTemporalBins;
    std::vector<double> cells(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * stride, 0.0);
    std::vector<double> magnitude;
    std::vector<int> bin;
    for (const Patch& slice : cube.slices) {
        if (slice.size_x() != cube.dims.x || slice.size_y() != cube.dims.y)
            throw std::invalid_argument("cube slice does not match cube dims");
        magnitude_and_bins(slice.pixels, geometry.bins, magnitude, bin);
        accumulate_cells(magnitude, bin, cube.dims.x, cube.dims.y, geometry, stride, cells);
    }
    for (std::size_t k = 0; k + 1 < cube.slices.size(); ++k) {
        const GrayImage& a = cube.slices[k].pixels;
        const GrayImage& b = cube.slices[k + 1].pixels;
        for (int r = 0; r < cube.dims.y; ++r) {
            const int cy = r / geometry.cell;
            for (int c = 0; c < cube.dims.x; ++c) {
                const double diff = b(r, c) - a(r, c);
                if (diff == 0.0) continue;
                const std::size_t cell = static_cast<std::size_t>(cy) * grid.cells_x + c / geometry.cell;
                cells[cell * stride + geometry.bins + (diff > 0.0 ? 0 : 1)] += std::abs(diff);
            }
        }
    }
    return normalize_blocks(cells, grid, geometry, stride);
}

bool box_inside(const CubeBox& box, const CubeDims& dims, int bins) {
    return 0 <= box.x0 && box.x0 < box.x1 && box.x1 <= dims.x && 0 <= box.y0 && box.y0 < box.y1 &&
           box.y1 <= dims.y && 0 <= box.t0 && box.t0 < box.t1 && box.t1 <= dims.t && 0 <= box.orientation &&
           box.orientation < bins;
}

ChannelVolume::ChannelVolume(CubeDims dims, int bins) : dims_(dims), bins_(bins) {
    volume_.assign(static_cast<std::size_t>(dims.t + 1) * (dims.y + 1) * (dims.x + 1) * (bins + 1), 0.0);
}

double ChannelVolume::channel(int t, int bin, int row, int col) const {
    return box_sum(CubeBox{col, col + 1, row, row + 1, t, t + 1, bin}, bin);
}

double ChannelVolume::box_sum(const CubeBox& box, int bin) const {
    const double* v = volume_.data() + bin;
    const auto at = [&](int t, int r, int c) { return v[index(t, r, c)]; };
    const auto slab = [&](int t) {
        return at(t, box.y1, box.x1) - at(t, box.y0, box.x1) - at(t, box.y1, box.x0) + at(t, box.y0, box.x0);
    };
    return slab(box.t1) - slab(box.t0);
}

double ChannelVolume::box_total(const CubeBox& box) const { return box_sum(box, bins_); }

ChannelVolume build_channels(const StCube& cube, int bins) {
    if (bins < 1) throw std::invalid_argument("channel bin count must be positive");
    if (cube.dims.x < 3 || cube.dims.y < 3) throw std::invalid_argument("cube too small for gradient channels");
    if (static_cast<int>(cube.slices.size()) != cube.dims.t)
        throw std::invalid_argument("cube slice count does not match dims");
    ChannelVolume vol(cube.dims, bins);
    const int w = cube.dims.x;
    const int h = cube.dims.y;
    const std::size_t stride = static_cast<std::size_t>(bins) + 1;
    std::vector<double> magnitude;
    std::vector<int> bin_of;
    std::vector<double> row_sum(stride);
    for (int t = 0; t < cube.dims.t; ++t) {
        const Patch& slice = cube.slices[t];
        if (slice.size_x() != w || slice.size_y() != h)
            throw std::invalid_argument("cube slice does not match cube dims");
        magnitude_and_bins(slice.pixels, bins, magnitude, bin_of);
        for (int r = 0; r < h; ++r) {
            std::fill(row_sum.begin(), row_sum.end(), 0.0);
            for (int c = 0; c < w; ++c) {
                const std::size_t p = static_cast<std::size_t>(r) * w + c;
                row_sum[bin_of[p]] += magnitude[p];
                row_sum[bins] += magnitude[p];
                double* out = &vol.volume_[vol.index(t + 1, r + 1, c + 1)];
                const double* above = &vol.volume_[vol.index(t + 1, r, c + 1)];
                const double* before = &vol.volume_[vol.index(t, r + 1, c + 1)];
                const double* before_above = &vol.volume_[vol.index(t, r, c + 1)];
                for (std::size_t b = 0; b < stride; ++b)
                    out[b] = row_sum[b] + above[b] + before[b] - before_above[b];
            }
        }
    }
    return vol;
}

double gradient_energy(const ChannelVolume& channels, const CubeBox& box) {
    return EnergyProbe(channels.dims(), channels.bins(), box)(channels);
}

EnergyProbe::EnergyProbe(const CubeDims& dims, int bins, const CubeBox& box)
    : bin_(static_cast<std::size_t>(box.orientation)),
      total_(static_cast<std::size_t>(bins)),
      extent_(static_cast<std::size_t>(dims.t + 1) * (dims.y + 1) * (dims.x + 1) * (bins + 1)) {
    if (!box_inside(box, dims, bins)) throw std::out_of_range("cube box out of bounds");
    const auto at = [&](int t, int r, int c) {
        return ((static_cast<std::size_t>(t) * (dims.y + 1) + r) * (dims.x + 1) + c) * (static_cast<std::size_t>(bins) + 1);
    };
    plus_[0] = at(box.t1, box.y1, box.x1);
    plus_[1] = at(box.t1, box.y0, box.x0);
    plus_[2] = at(box.t0, box.y0, box.x1);
    plus_[3] = at(box.t0, box.y1, box.x0);
    minus_[0] = at(box.t1, box.y0, box.x1);
    minus_[1] = at(box.t1, box.y1, box.x0);
    minus_[2] = at(box.t0, box.y1, box.x1);
    minus_[3] = at(box.t0, box.y0, box.x0);
}

double EnergyProbe::operator()(const ChannelVolume& channels) const {
    if (channels.volume_.size() != extent_) throw std::invalid_argument("channel volume does not match the probe");
    const double* v = channels.volume_.data();
    double in_bin = 0.0;
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
        in_bin += v[plus_[k] + bin_] - v[minus_[k] + bin_];
        total += v[plus_[k] + total_] - v[minus_[k] + total_];
    }
    if (total < kFeaturelessEnergy) return 0.0;
    return std::clamp(in_bin / total, 0.0, 1.0);
}

}  // namespace skywatch
