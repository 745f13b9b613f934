#pragma once

#include <array>
#include <vector>

#include "skywatch/imagecore.hpp"
#include "skywatch/st_cube.hpp"

namespace skywatch {

struct HogGeometry {
    int cell = 8;
    int block = 2;         // cells per block side
    int block_stride = 1;  // in cells
    int bins = 9;

    friend bool operator==(const HogGeometry&, const HogGeometry&) = default;
};

inline constexpr double kHogEpsilon = 1e-6;
inline constexpr int kTemporalBins = 2;

struct HogDescriptor {
    std::vector<double> values;
    int cells_x = 0;
    int cells_y = 0;
    int blocks_x = 0;
    int blocks_y = 0;
    /// Bins per cell, including temporal bins for hog3d.
    int bins = 0;

    std::size_t block_length() const { return static_cast<std::size_t>(4) * bins; }
};

/// Nearest of `bins` unsigned orientation bins centered at k*pi/bins.
int orientation_bin(double angle, int bins);

/// Descriptor length for a patch of the given size, or throws if the geometry
/// does not tile it.
std::size_t hog_length(PatchSize size, const HogGeometry& geometry, int extra_bins = 0);

HogDescriptor hog(const GrayImage& image, const HogGeometry& geometry = {});
inline HogDescriptor hog(const Patch& patch, const HogGeometry& geometry = {}) { return hog(patch.pixels, geometry); }

/// Spatial bins summed over all slices plus two bins of positive/negative
/// frame-to-frame intensity change per cell.
HogDescriptor hog3d(const StCube& cube, const HogGeometry& geometry = {});

/// Half-open box [x0,x1) x [y0,y1) x [t0,t1) with orientation bin.
struct CubeBox {
    int x0 = 0, x1 = 0;
    int y0 = 0, y1 = 0;
    int t0 = 0, t1 = 0;
    int orientation = 0;

    friend bool operator==(const CubeBox&, const CubeBox&) = default;
};

bool box_inside(const CubeBox& box, const CubeDims& dims, int bins);

/// Per-slice, per-orientation gradient magnitude with summed-area tables.
class ChannelVolume {
public:
    ChannelVolume() = default;
    ChannelVolume(CubeDims dims, int bins);

    int bins() const { return bins_; }
    const CubeDims& dims() const { return dims_; }

    double channel(int t, int bin, int row, int col) const;
    /// Sum of channel `bin` over the box's spatial range and t-range.
    double box_sum(const CubeBox& box, int bin) const;
    /// Sum over all bins (total gradient magnitude).
    double box_total(const CubeBox& box) const;

private:
    friend ChannelVolume build_channels(const StCube& cube, int bins);
    friend class EnergyProbe;

    std::size_t index(int t, int row, int col) const {
        return ((static_cast<std::size_t>(t) * (dims_.y + 1) + row) * (dims_.x + 1) + col) * (bins_ + 1);
    }

    CubeDims dims_;
    int bins_ = 0;
    // Summed volume over (t, row, col) with the bins interleaved per corner;
    // bin index bins_ holds the total magnitude.
    std::vector<double> volume_;
};

inline constexpr int kChannelBins = 8;
inline constexpr double kFeaturelessEnergy = 1e-12;

ChannelVolume build_channels(const StCube& cube, int bins = kChannelBins);

/// Fraction of the box's gradient energy that falls into its orientation bin;
/// 0 for featureless boxes.
double gradient_energy(const ChannelVolume& channels, const CubeBox& box);

/// gradient_energy for one box, with the corner offsets resolved up front so
/// it can be applied to many volumes of the same dims and bin count.
class EnergyProbe {
public:
    EnergyProbe(const CubeDims& dims, int bins, const CubeBox& box);

    double operator()(const ChannelVolume& channels) const;

private:
    std::size_t plus_[4];
    std::size_t minus_[4];
    std::size_t bin_;
    std::size_t total_;
    std::size_t extent_;
};

}  // namespace skywatch
