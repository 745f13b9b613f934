#include "skywatch/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace skywatch {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double lattice_value(std::int64_t x, std::int64_t y, std::uint64_t seed) {
    const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(x) ^ mix64(static_cast<std::uint64_t>(y))));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Two-octave value noise in [0, 1].
double value_noise(double x, double y, std::uint64_t seed) {
    double sum = 0.0;
    double amplitude = 1.0;
    double norm = 0.0;
    for (int octave = 0; octave < 2; ++octave) {
        const double fx = std::floor(x);
        const double fy = std::floor(y);
        const auto ix = static_cast<std::int64_t>(fx);
        const auto iy = static_cast<std::int64_t>(fy);
        const double tx = smooth(x - fx);
        const double ty = smooth(y - fy);
        const std::uint64_t s = seed + 0x51ed2701ULL * octave;
        const double a = lattice_value(ix, iy, s);
        const double b = lattice_value(ix + 1, iy, s);
        const double c = lattice_value(ix, iy + 1, s);
        const double d = lattice_value(ix + 1, iy + 1, s);
        const double top = a + tx * (b - a);
        const double bottom = c + tx * (d - c);
        sum += amplitude * (top + ty * (bottom - top));
        norm += amplitude;
        amplitude *= 0.5;
        x *= 2.0;
        y *= 2.0;
    }
    return sum / norm;
}

struct Target {
    TargetShape shape;
    double start_x, start_y;
    double vx, vy;
    double side0;
    double contrast;
    double polarity;
    double phase;
    double angle0;
};

// Position folded back into [lo, hi] by mirror reflection.
double reflect(double u, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) return 0.5 * (lo + hi);
    double y = std::fmod(u - lo, 2.0 * span);
    if (y < 0.0) y += 2.0 * span;
    if (y > span) y = 2.0 * span - y;
    return lo + y;
}

// Whether a point (relative to the target center, in pixels) is inside the shape.
bool inside(const Target& t, double side, double angle, double dx, double dy) {
    const double half = 0.5 * side;
    switch (t.shape) {
        case TargetShape::Disc:
            return dx * dx + dy * dy <= half * half;
        case TargetShape::Cross: {
            const double bar = side / 8.0;
            return (std::abs(dx) <= half && std::abs(dy) <= bar) || (std::abs(dy) <= half && std::abs(dx) <= bar);
        }
        default: {
            const double c = std::cos(angle), s = std::sin(angle);
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            const double minor = 0.6 * half;
            return (u * u) / (half * half) + (v * v) / (minor * minor) <= 1.0;
        }
    }
}

TargetShape parse_shape(const std::string& s) {
    if (s == "disc") return TargetShape::Disc;
    if (s == "cross") return TargetShape::Cross;
    if (s == "blob") return TargetShape::Blob;
    if (s == "mixed") return TargetShape::Mixed;
    throw std::invalid_argument("unknown target shape: " + s);
}

std::string shape_name(TargetShape s) {
    switch (s) {
        case TargetShape::Disc: return "disc";
        case TargetShape::Cross: return "cross";
        case TargetShape::Blob: return "blob";
        default: return "mixed";
    }
}

void validate(const SynthConfig& c) {
    if (c.width < 8 || c.height < 8) throw std::invalid_argument("synthetic frames must be at least 8x8");
    if (c.frames < 1 || c.targets < 0) throw std::invalid_argument("frame and target counts must be valid");
    if (!(c.side_min > 0.0 && c.side_min <= c.side_max)) throw std::invalid_argument("invalid target side range");
    if (!(c.growth > 0.0)) throw std::invalid_argument("growth must be positive");
    if (!(c.contrast_min > 0.0 && c.contrast_min <= c.contrast_max)) throw std::invalid_argument("invalid contrast range");
    if (!(c.speed_min >= 0.0 && c.speed_min <= c.speed_max)) throw std::invalid_argument("invalid speed range");
    if (c.background_amplitude < 0.0 || c.background_amplitude + c.contrast_max > 0.5)
        throw std::invalid_argument("background amplitude plus contrast must stay within 0.5");
    if (!(c.background_scale > 0.0) || !(c.jitter_period > 0.0) || c.noise_sigma < 0.0)
        throw std::invalid_argument("invalid background or noise parameters");
    const double largest = c.side_max * std::pow(std::max(c.growth, 1.0), c.frames - 1);
    if (largest + 4.0 > std::min(c.width, c.height)) throw std::invalid_argument("target larger than frame");
}

}  // namespace

SynthConfig parse_synth_config(const std::string& text) {
    SynthConfig c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": missing '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "width") c.width = std::stoi(value);
            else if (key == "height") c.height = std::stoi(value);
            else if (key == "frames") c.frames = std::stoi(value);
            else if (key == "targets") c.targets = std::stoi(value);
            else if (key == "shape") c.shape = parse_shape(value);
            else if (key == "side_min") c.side_min = std::stod(value);
            else if (key == "side_max") c.side_max = std::stod(value);
            else if (key == "growth") c.growth = std::stod(value);
            else if (key == "contrast_min") c.contrast_min = std::stod(value);
            else if (key == "contrast_max") c.contrast_max = std::stod(value);
            else if (key == "speed_min") c.speed_min = std::stod(value);
            else if (key == "speed_max") c.speed_max = std::stod(value);
            else if (key == "jitter_amplitude") c.jitter_amplitude = std::stod(value);
            else if (key == "jitter_period") c.jitter_period = std::stod(value);
            else if (key == "background_scale") c.background_scale = std::stod(value);
            else if (key == "background_amplitude") c.background_amplitude = std::stod(value);
            else if (key == "drift_x") c.drift_x = std::stod(value);
            else if (key == "drift_y") c.drift_y = std::stod(value);
            else if (key == "shake_amplitude") c.shake_amplitude = std::stod(value);
            else if (key == "noise_sigma") c.noise_sigma = std::stod(value);
            else if (key == "seed") c.seed = std::stoull(value);
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::out_of_range&) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": value out of range");
        }
    }
    validate(c);
    return c;
}

SynthConfig load_synth_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_synth_config(ss.str());
}

std::string format_synth_config(const SynthConfig& c) {
    // Shortest representation that parses back to the same double.
    const auto num = [](double v) {
        char buf[32];
        const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
        return std::string(buf, end);
    };
    std::ostringstream out;
    out << "width = " << c.width << "\nheight = " << c.height << "\nframes = " << c.frames
        << "\ntargets = " << c.targets << "\nshape = " << shape_name(c.shape) << "\nside_min = " << num(c.side_min)
        << "\nside_max = " << num(c.side_max) << "\ngrowth = " << num(c.growth)
        << "\ncontrast_min = " << num(c.contrast_min) << "\ncontrast_max = " << num(c.contrast_max)
        << "\nspeed_min = " << num(c.speed_min) << "\nspeed_max = " << num(c.speed_max)
        << "\njitter_amplitude = " << num(c.jitter_amplitude) << "\njitter_period = " << num(c.jitter_period)
        << "\nbackground_scale = " << num(c.background_scale)
        << "\nbackground_amplitude = " << num(c.background_amplitude) << "\ndrift_x = " << num(c.drift_x)
        << "\ndrift_y = " << num(c.drift_y) << "\nshake_amplitude = " << num(c.shake_amplitude)
        << "\nnoise_sigma = " << num(c.noise_sigma) << "\nseed = " << c.seed << '\n';
    return out.str();
}

bool is_named_benchmark(const std::string& name) {
    return name == "bench-easy" || name == "bench-hard" || name == "bench-collision";
}

SynthConfig named_benchmark(const std::string& name) {
    SynthConfig c;
    c.width = 160;
    c.height = 120;
    if (name == "bench-easy") {
        c.frames = 40;
        c.targets = 2;
        c.side_min = 20.0;
        c.side_max = 48.0;
        c.contrast_min = 0.25;
        c.contrast_max = 0.3;
        c.speed_min = 0.5;
        c.speed_max = 2.0;
        c.jitter_amplitude = 1.0;
        c.background_scale = 40.0;
        c.background_amplitude = 0.1;
        c.drift_x = 0.3;
        c.drift_y = 0.1;
        c.noise_sigma = 0.02;
    } else if (name == "bench-hard") {
        c.frames = 40;
        c.targets = 3;
        c.side_min = 20.0;
        c.side_max = 48.0;
        c.contrast_min = 0.22;
        c.contrast_max = 0.28;
        c.speed_min = 3.0;
        c.speed_max = 6.0;
        c.jitter_amplitude = 2.0;
        c.jitter_period = 10.0;
        c.background_scale = 20.0;
        c.background_amplitude = 0.2;
        c.drift_x = 2.5;
        c.drift_y = 1.0;
        c.shake_amplitude = 2.0;
        c.noise_sigma = 0.04;
    } else if (name == "bench-collision") {
        // Constant bearing, apparent size growing from ~10 px towards ~75 px.
        c.width = 240;
        c.height = 180;
        c.frames = 40;
        c.targets = 3;
        c.side_min = 8.0;
        c.side_max = 12.0;
        c.growth = 1.05;
        c.contrast_min = 0.25;
        c.contrast_max = 0.3;
        c.speed_min = 0.0;
        c.speed_max = 0.0;
        c.jitter_amplitude = 0.5;
        c.background_scale = 40.0;
        c.background_amplitude = 0.1;
        c.drift_x = 0.3;
        c.drift_y = 0.1;
        c.noise_sigma = 0.02;
    } else {
        throw std::invalid_argument("unknown benchmark: " + name);
    }
    validate(c);
    return c;
}

SyntheticSequence generate_sequence(const SynthConfig& config) {
    validate(config);
    const SynthConfig& c = config;
    std::mt19937_64 rng(mix64(c.seed ^ 0x7a11e7ULL));
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    std::vector<Target> targets;
    for (int k = 0; k < c.targets; ++k) {
        Target t{};
        t.shape = c.shape == TargetShape::Mixed ? static_cast<TargetShape>(k % 3) : c.shape;
        t.side0 = uniform(c.side_min, std::nextafter(c.side_max, c.side_max + 1.0));
        t.start_x = uniform(0.0, c.width);
        t.start_y = uniform(0.0, c.height);
        const double speed = uniform(c.speed_min, std::nextafter(c.speed_max, c.speed_max + 1.0));
        const double heading = uniform(0.0, 2.0 * std::numbers::pi);
        t.vx = speed * std::cos(heading);
        t.vy = speed * std::sin(heading);
        t.contrast = uniform(c.contrast_min, std::nextafter(c.contrast_max, c.contrast_max + 1.0));
        t.polarity = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        t.phase = uniform(0.0, 2.0 * std::numbers::pi);
        t.angle0 = uniform(0.0, std::numbers::pi);
        targets.push_back(t);
    }

    SyntheticSequence seq;
    const std::uint64_t background_seed = mix64(c.seed ^ 0xb4c6ULL);
    constexpr int kSuper = 4;
    for (int f = 0; f < c.frames; ++f) {
        const double shake = c.shake_amplitude * std::sin(2.0 * std::numbers::pi * f / 7.0);
        const double ox = c.drift_x * f + shake;
        const double oy = c.drift_y * f + 0.5 * shake;
        GrayImage bg(c.width, c.height);
        for (int r = 0; r < c.height; ++r)
            for (int col = 0; col < c.width; ++col) {
                const double n = value_noise((col + ox) / c.background_scale, (r + oy) / c.background_scale,
                                             background_seed);
                bg(r, col) = 0.5 + c.background_amplitude * (2.0 * n - 1.0);
            }

        GrayImage img = bg;
        for (std::size_t k = 0; k < targets.size(); ++k) {
            const Target& t = targets[k];
            const double side = t.side0 * std::pow(c.growth, f);
            const double jitter = c.jitter_amplitude * std::sin(2.0 * std::numbers::pi * f / c.jitter_period + t.phase);
            const double margin = 0.5 * side + 1.0;
            const double cx = reflect(t.start_x + t.vx * f + jitter, margin, c.width - 1 - margin);
            const double cy = reflect(t.start_y + t.vy * f + jitter * 0.7, margin, c.height - 1 - margin);
            const double angle = t.angle0 + 0.05 * f;

            const int r0 = std::max(0, static_cast<int>(std::floor(cy - 0.5 * side)) - 1);
            const int r1 = std::min(c.height - 1, static_cast<int>(std::ceil(cy + 0.5 * side)) + 1);
            const int c0 = std::max(0, static_cast<int>(std::floor(cx - 0.5 * side)) - 1);
            const int c1 = std::min(c.width - 1, static_cast<int>(std::ceil(cx + 0.5 * side)) + 1);
            double core_diff = 0.0;
            int core_count = 0;
            for (int r = r0; r <= r1; ++r) {
                for (int col = c0; col <= c1; ++col) {
                    int hits = 0;
                    for (int sy = 0; sy < kSuper; ++sy)
                        for (int sx = 0; sx < kSuper; ++sx) {
                            const double dx = col - 0.5 + (sx + 0.5) / kSuper - cx;
                            const double dy = r - 0.5 + (sy + 0.5) / kSuper - cy;
                            if (inside(t, side, angle, dx, dy)) ++hits;
                        }
                    if (hits == 0) continue;
                    const double coverage = static_cast<double>(hits) / (kSuper * kSuper);
                    const double before = img(r, col);
                    const double raw = before + t.polarity * t.contrast * coverage;
                    img(r, col) = std::clamp(raw, 0.0, 1.0);
                    if (hits == kSuper * kSuper && img(r, col) == raw) {
                        core_diff += img(r, col) - before;
                        ++core_count;
                    }
                }
            }
            if (core_count > 0 && std::abs(core_diff / core_count) < c.contrast_min - 1e-9)
                throw std::logic_error("synthetic target fell below the configured minimum contrast");
            seq.ground_truth.push_back({f, {cy, cx}, side});
        }

        if (c.noise_sigma > 0.0) {
            std::seed_seq seeds{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                                static_cast<std::uint32_t>(f), 0x6e01u};
            std::mt19937_64 noise_rng(seeds);
            std::normal_distribution<double> noise(0.0, c.noise_sigma);
            for (double& v : img.values()) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
        }
        // Same 8-bit levels the frame files carry.
        for (double& v : img.values()) v = std::round(v * 255.0) / 255.0;
        seq.frames.push_back({std::move(img), f});
        seq.backgrounds.push_back(std::move(bg));
    }
    seq.annotations = annotations_from_ground_truth(seq.ground_truth);
    return seq;
}

std::vector<ShiftAnnotation> annotations_from_ground_truth(std::span<const GroundTruthBox> boxes) {
    std::vector<ShiftAnnotation> out;
    out.reserve(boxes.size());
    for (const GroundTruthBox& g : boxes) out.push_back({g.frame, g.center, g.side});
    return out;
}

void write_sequence(const std::filesystem::path& directory, const SyntheticSequence& sequence,
                    const SynthConfig& config) {
    namespace fs = std::filesystem;
    fs::create_directories(directory / "frames");
    for (const Frame& f : sequence.frames) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.pgm", f.index);
        write_pgm(directory / "frames" / name, f.pixels);
    }
    write_ground_truth_csv(directory / "gt.csv", sequence.ground_truth);
    std::ofstream cfg(directory / "config.txt");
    cfg << format_synth_config(config);
    if (!cfg) throw std::runtime_error("cannot write " + (directory / "config.txt").string());
}

}  // namespace skywatch
