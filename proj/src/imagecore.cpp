#include "skywatch/imagecore.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fnmatch.h>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace skywatch {

namespace fs = std::filesystem;

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image dimensions");
}

GrayImage::GrayImage(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image dimensions");
    if (values_.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("intensity count does not match width x height");
}

double GrayImage::sample(double row, double col) const {
    row = std::clamp(row, 0.0, static_cast<double>(height_ - 1));
    col = std::clamp(col, 0.0, static_cast<double>(width_ - 1));
    const int r0 = static_cast<int>(row);
    const int c0 = static_cast<int>(col);
    const int r1 = std::min(r0 + 1, height_ - 1);
    const int c1 = std::min(c0 + 1, width_ - 1);
    const double fr = row - r0;
    const double fc = col - c0;
    const double top = (*this)(r0, c0) + fc * ((*this)(r0, c1) - (*this)(r0, c0));
    const double bottom = (*this)(r1, c0) + fc * ((*this)(r1, c1) - (*this)(r1, c0));
    return top + fr * (bottom - top);
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace {

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

// Netpbm header tokens may be separated by whitespace and '#' comments.
int read_pnm_int(std::istream& in) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("malformed netpbm header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

GrayImage read_pnm(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5' && magic[1] != '3' && magic[1] != '6'))
        throw std::runtime_error("unsupported netpbm variant in " + file.string());
    const bool ascii = magic[1] == '2' || magic[1] == '3';
    const int channels = (magic[1] == '3' || magic[1] == '6') ? 3 : 1;
    const int width = read_pnm_int(in);
    const int height = read_pnm_int(in);
    const int maxval = read_pnm_int(in);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("invalid netpbm header in " + file.string());

    const std::size_t n = static_cast<std::size_t>(width) * height * channels;
    std::vector<double> raw(n);
    if (ascii) {
        for (auto& v : raw) {
            in >> v;
            if (!in) throw std::runtime_error("truncated netpbm data in " + file.string());
        }
    } else {
        const int bytes = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> buf(n * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size()))
            throw std::runtime_error("truncated netpbm data in " + file.string());
        for (std::size_t k = 0; k < n; ++k)
            raw[k] = bytes == 1 ? buf[k] : (buf[2 * k] << 8 | buf[2 * k + 1]);
    }

    std::vector<double> gray(static_cast<std::size_t>(width) * height);
    for (std::size_t p = 0; p < gray.size(); ++p) {
        if (channels == 1) {
            gray[p] = raw[p] / maxval;
        } else {
            gray[p] = luma(raw[3 * p] / maxval, raw[3 * p + 1] / maxval, raw[3 * p + 2] / maxval);
        }
        gray[p] = std::clamp(gray[p], 0.0, 1.0);
    }
    return GrayImage(width, height, std::move(gray));
}

GrayImage read_png(const fs::path& file) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, file.string().c_str()))
        throw std::runtime_error("cannot read " + file.string() + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error("cannot decode " + file.string() + ": " + img.message);
    }
    const int width = static_cast<int>(img.width);
    const int height = static_cast<int>(img.height);
    std::vector<double> gray(static_cast<std::size_t>(width) * height);
    for (std::size_t p = 0; p < gray.size(); ++p)
        gray[p] = std::clamp(luma(buf[3 * p] / 255.0, buf[3 * p + 1] / 255.0, buf[3 * p + 2] / 255.0), 0.0, 1.0);
    return GrayImage(width, height, std::move(gray));
}

}  // namespace

GrayImage read_image(const fs::path& file) {
    if (has_extension(file, {".png"})) return read_png(file);
    if (has_extension(file, {".pgm", ".ppm", ".pnm"})) return read_pnm(file);
    throw std::runtime_error("unsupported image format: " + file.string());
}

void write_pgm(const fs::path& file, const GrayImage& image) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    std::vector<unsigned char> buf(image.values().size());
    for (std::size_t p = 0; p < buf.size(); ++p)
        buf[p] = static_cast<unsigned char>(std::lround(std::clamp(image.values()[p], 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

std::vector<Frame> load_frame_sequence(const fs::path& directory, const std::string& pattern) {
    if (!fs::is_directory(directory)) throw std::runtime_error("missing frame directory: " + directory.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (!entry.is_regular_file()) continue;
        const auto& p = entry.path();
        if (!has_extension(p, {".png", ".pgm", ".ppm", ".pnm"})) continue;
        if (fnmatch(pattern.c_str(), p.filename().string().c_str(), 0) != 0) continue;
        files.push_back(p);
    }
    if (files.empty()) throw std::runtime_error("no frames found in " + directory.string());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (const auto& f : files) {
        GrayImage img = read_image(f);
        if (!frames.empty() && (img.width() != frames.front().width() || img.height() != frames.front().height()))
            throw std::runtime_error("inconsistent frame dimensions in " + f.string());
        frames.push_back(Frame{std::move(img), static_cast<int>(frames.size())});
    }
    return frames;
}

Patch extract_scaled_patch(const Frame& frame, PixelPos center, PatchSize size, double scale) {
    if (size.x < 1 || size.y < 1) throw std::invalid_argument("patch size must be positive");
    if (!(scale > 0.0)) throw std::invalid_argument("patch scale must be positive");
    if (frame.pixels.empty()) throw std::invalid_argument("cannot extract from an empty frame");
    // Separable bilinear weights: every patch row and column maps to one source
    // coordinate, so the clamped taps are computed once per axis.
    struct Tap {
        int lo;
        int hi;
        double frac;
    };
    const GrayImage& src = frame.pixels;
    auto taps = [scale](double origin, int count, int half, int extent) {
        std::vector<Tap> t(count);
        for (int k = 0; k < count; ++k) {
            const double x = std::clamp(origin + (k - half) / scale, 0.0, static_cast<double>(extent - 1));
            const int lo = static_cast<int>(x);
            t[k] = {lo, std::min(lo + 1, extent - 1), x - lo};
        }
        return t;
    };
    const std::vector<Tap> rows = taps(center.i, size.y, size.y / 2, src.height());
    const std::vector<Tap> cols = taps(center.j, size.x, size.x / 2, src.width());
    GrayImage out(size.x, size.y);
    for (int r = 0; r < size.y; ++r) {
        const Tap& ty = rows[r];
        for (int c = 0; c < size.x; ++c) {
            const Tap& tx = cols[c];
            const double top = src(ty.lo, tx.lo) + tx.frac * (src(ty.lo, tx.hi) - src(ty.lo, tx.lo));
            const double bottom = src(ty.hi, tx.lo) + tx.frac * (src(ty.hi, tx.hi) - src(ty.hi, tx.lo));
            out(r, c) = top + ty.frac * (bottom - top);
        }
    }
    return Patch{std::move(out), center, frame.index};
}

Patch extract_patch(const Frame& frame, PixelPos center, PatchSize size) {
    return extract_scaled_patch(frame, center, size, 1.0);
}

double level_to_source(double level_coord, double scale) { return (level_coord + 0.5) / scale - 0.5; }
double source_to_level(double source_coord, double scale) { return (source_coord + 0.5) * scale - 0.5; }

GrayImage resize(const GrayImage& image, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("resize scale must be positive");
    const int w = std::max(1, static_cast<int>(std::lround(image.width() * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(image.height() * scale)));
    GrayImage out(w, h);
    for (int r = 0; r < h; ++r) {
        const double row = level_to_source(r, scale);
        for (int c = 0; c < w; ++c) out(r, c) = image.sample(row, level_to_source(c, scale));
    }
    return out;
}

std::vector<PyramidLevel> image_pyramid(const Frame& frame, double scale_step, int min_side) {
    if (!(scale_step > 0.0 && scale_step < 1.0)) throw std::invalid_argument("scale_step must lie in (0, 1)");
    if (min_side < 1) throw std::invalid_argument("min_side must be positive");
    std::vector<PyramidLevel> levels;
    levels.push_back({frame, 1.0});
    for (int k = 1;; ++k) {
        const double scale = std::pow(scale_step, k);
        const long w = std::lround(frame.width() * scale);
        const long h = std::lround(frame.height() * scale);
        if (std::min(w, h) < min_side) break;
        levels.push_back({Frame{resize(frame.pixels, scale), frame.index}, scale});
    }
    return levels;
}

double unsigned_orientation(double gx, double gy) {
    if (gx == 0.0 && gy == 0.0) return 0.0;
    double a = std::atan2(gy, gx);
    if (a < 0.0) a += std::numbers::pi;
    if (a >= std::numbers::pi) a -= std::numbers::pi;
    return a;
}

GradientField spatial_gradients(const GrayImage& image) {
    const int w = image.width();
    const int h = image.height();
    if (w < 3 || h < 3) throw std::invalid_argument("gradients need at least a 3x3 patch");
    GradientField g;
    g.width = w;
    g.height = h;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    g.gx.resize(n);
    g.gy.resize(n);
    g.magnitude.resize(n);
    g.orientation.resize(n);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            double dx;
            if (c == 0) dx = image(r, 1) - image(r, 0);
            else if (c == w - 1) dx = image(r, w - 1) - image(r, w - 2);
            else dx = 0.5 * (image(r, c + 1) - image(r, c - 1));
            double dy;
            if (r == 0) dy = image(1, c) - image(0, c);
            else if (r == h - 1) dy = image(h - 1, c) - image(h - 2, c);
            else dy = 0.5 * (image(r + 1, c) - image(r - 1, c));
            g.gx[p] = dx;
            g.gy[p] = dy;
            g.magnitude[p] = std::sqrt(dx * dx + dy * dy);
            g.orientation[p] = g.magnitude[p] == 0.0 ? 0.0 : unsigned_orientation(dx, dy);
        }
    }
    return g;
}

}  // namespace skywatch
