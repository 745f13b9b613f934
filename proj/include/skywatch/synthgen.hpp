#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skywatch/boxes.hpp"
#include "skywatch/imagecore.hpp"
#include "skywatch/shift_regressor.hpp"

namespace skywatch {

enum class TargetShape { Disc, Cross, Blob, Mixed };

struct SynthConfig {
    int width = 240;
    int height = 180;
    int frames = 60;
    int targets = 2;
    TargetShape shape = TargetShape::Mixed;
    double side_min = 10.0;
    double side_max = 100.0;
    /// Per-frame multiplicative size change (1 keeps sizes fixed).
    double growth = 1.0;
    double contrast_min = 0.2;
    double contrast_max = 0.3;
    /// Target speed in pixels per frame, drawn uniformly per target.
    double speed_min = 0.0;
    double speed_max = 2.0;
    double jitter_amplitude = 0.0;
    double jitter_period = 16.0;
    /// Lattice spacing of the value-noise background, in pixels.
    double background_scale = 32.0;
    double background_amplitude = 0.15;
    double drift_x = 0.0;
    double drift_y = 0.0;
    /// Sinusoidal camera shake added to the drift, in pixels.
    double shake_amplitude = 0.0;
    double noise_sigma = 0.02;
    std::uint64_t seed = 7;
};

/// Parses `key = value` lines (# starts a comment). Unknown keys are errors.
SynthConfig parse_synth_config(const std::string& text);
SynthConfig load_synth_config(const std::filesystem::path& file);
std::string format_synth_config(const SynthConfig& config);

/// Built-in benchmark configurations: bench-easy, bench-hard, bench-collision.
SynthConfig named_benchmark(const std::string& name);
bool is_named_benchmark(const std::string& name);

struct SyntheticSequence {
    std::vector<Frame> frames;
    std::vector<GroundTruthBox> ground_truth;  // frame-major, one row per target
    std::vector<ShiftAnnotation> annotations;
    /// Noise-free background of each frame (no targets), for self-checks.
    std::vector<GrayImage> backgrounds;
};

SyntheticSequence generate_sequence(const SynthConfig& config);

/// Writes frames/frame_NNNNN.pgm, gt.csv and config.txt under `directory`.
void write_sequence(const std::filesystem::path& directory, const SyntheticSequence& sequence,
                    const SynthConfig& config);

std::vector<ShiftAnnotation> annotations_from_ground_truth(std::span<const GroundTruthBox> boxes);

}  // namespace skywatch
