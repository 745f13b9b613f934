#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace skywatch {

/// Sub-pixel position in (row, col) order.
struct PixelPos {
    double i = 0.0;
    double j = 0.0;

    friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

/// Row-major grid of intensities in [0,1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0);
    GrayImage(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return values_.empty(); }

    double operator()(int row, int col) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }
    double& operator()(int row, int col) { return values_[static_cast<std::size_t>(row) * width_ + col]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    /// Bilinear sample at a real position; coordinates outside the grid are
    /// clamped to the nearest border pixel.
    double sample(double row, double col) const;

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

struct Frame {
    GrayImage pixels;
    int index = 0;

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

struct Patch {
    GrayImage pixels;
    PixelPos source_center;
    int source_frame_index = 0;

    int size_x() const { return pixels.width(); }
    int size_y() const { return pixels.height(); }
};

struct PatchSize {
    int x = 40;
    int y = 40;

    friend bool operator==(const PatchSize&, const PatchSize&) = default;
};

struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> gx;
    std::vector<double> gy;
    std::vector<double> magnitude;
    /// Unsigned angle in [0, pi); 0 where the magnitude vanishes.
    std::vector<double> orientation;
};

struct PyramidLevel {
    Frame frame;
    double scale = 1.0;
};

/// Luma conversion used for every color input.
double luma(double r, double g, double b);

std::vector<Frame> load_frame_sequence(const std::filesystem::path& directory,
                                       const std::string& pattern = "*");

/// Reads a single PNG/PGM/PPM file as grayscale in [0,1].
GrayImage read_image(const std::filesystem::path& file);

/// Writes an 8-bit binary PGM (values are rounded from [0,1] to 0..255).
void write_pgm(const std::filesystem::path& file, const GrayImage& image);

/// Patch pixel (r, c) samples the source at
/// (center.i + r - floor(size.y/2), center.j + c - floor(size.x/2)).
Patch extract_patch(const Frame& frame, PixelPos center, PatchSize size);

/// Like extract_patch, but the patch grid is magnified by `scale` relative to
/// the source: patch pixel offsets d map to source offsets d / scale.
Patch extract_scaled_patch(const Frame& frame, PixelPos center, PatchSize size, double scale);

/// Bilinear resize with pixel-center alignment: output (r, c) samples the
/// source at ((r + 0.5) / scale - 0.5, (c + 0.5) / scale - 0.5).
GrayImage resize(const GrayImage& image, double scale);

/// Maps a level coordinate back to the original image.
double level_to_source(double level_coord, double scale);
double source_to_level(double source_coord, double scale);

std::vector<PyramidLevel> image_pyramid(const Frame& frame, double scale_step, int min_side);

GradientField spatial_gradients(const GrayImage& image);
inline GradientField spatial_gradients(const Patch& patch) { return spatial_gradients(patch.pixels); }

/// Folds atan2(gy, gx) into [0, pi).
double unsigned_orientation(double gx, double gy);

}  // namespace skywatch
