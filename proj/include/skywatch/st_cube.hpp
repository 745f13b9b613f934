#pragma once

#include <span>
#include <vector>

#include "skywatch/imagecore.hpp"

namespace skywatch {

struct CubeDims {
    int x = 40;
    int y = 40;
    int t = 4;

    PatchSize spatial() const { return {x, y}; }
    friend bool operator==(const CubeDims&, const CubeDims&) = default;
};

/// Grid anchor of a spatio-temporal cube: the slice centers before any
/// compensation and the last (most recent) frame index it covers.
struct CubeAnchor {
    double i = 0.0;
    double j = 0.0;
    int t = 0;
};

/// Stack of co-sized patches from frames t - dims.t + 1 .. t. Slice k was
/// extracted from frame anchor.t - dims.t + 1 + k.
struct StCube {
    CubeDims dims;
    std::vector<Patch> slices;
    CubeAnchor anchor;
    std::vector<bool> converged;
    std::vector<int> iterations;
    bool anchor_in_frame = true;

    PixelPos center(int k) const { return slices[k].source_center; }
};

/// Builds a cube from the given frames without any motion compensation.
/// `frames[k]` supplies slice k.
StCube plain_cube(std::span<const Frame* const> frames, CubeAnchor anchor, CubeDims dims);

}  // namespace skywatch
