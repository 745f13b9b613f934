#include "skywatch/boxes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace skywatch {

double square_iou(PixelPos a_center, double a_side, PixelPos b_center, double b_side) {
    const double ah = 0.5 * a_side;
    const double bh = 0.5 * b_side;
    const double w = std::min(a_center.j + ah, b_center.j + bh) - std::max(a_center.j - ah, b_center.j - bh);
    const double h = std::min(a_center.i + ah, b_center.i + bh) - std::max(a_center.i - ah, b_center.i - bh);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    const double inter = w * h;
    return inter / (a_side * a_side + b_side * b_side - inter);
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& file, std::size_t columns) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line_no == 1 && !fields.empty() && fields[0] == "frame") continue;
        if (fields.size() != columns)
            throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(columns) + " fields");
        rows.push_back(std::move(fields));
    }
    return rows;
}

double to_real(const std::string& s, const std::filesystem::path& file) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(file.string() + ": malformed number '" + s + "'");
    }
}

}  // namespace

void write_detections_csv(const std::filesystem::path& file, std::span<const Detection> detections) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "frame,center_x,center_y,side,score\n";
    for (const Detection& d : detections)
        out << d.frame << ',' << fixed6(d.center.j) << ',' << fixed6(d.center.i) << ',' << fixed6(d.side) << ','
            << fixed6(d.score) << '\n';
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

std::vector<Detection> read_detections_csv(const std::filesystem::path& file) {
    std::vector<Detection> out;
    for (const auto& row : read_rows(file, 5)) {
        Detection d;
        d.frame = static_cast<int>(to_real(row[0], file));
        d.center = {to_real(row[2], file), to_real(row[1], file)};
        d.side = to_real(row[3], file);
        d.score = to_real(row[4], file);
        out.push_back(d);
    }
    return out;
}

void write_ground_truth_csv(const std::filesystem::path& file, std::span<const GroundTruthBox> boxes) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "frame,center_x,center_y,side\n";
    for (const GroundTruthBox& g : boxes)
        out << g.frame << ',' << fixed6(g.center.j) << ',' << fixed6(g.center.i) << ',' << fixed6(g.side) << '\n';
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

std::vector<GroundTruthBox> read_ground_truth_csv(const std::filesystem::path& file) {
    std::vector<GroundTruthBox> out;
    for (const auto& row : read_rows(file, 4)) {
        GroundTruthBox g;
        g.frame = static_cast<int>(to_real(row[0], file));
        g.center = {to_real(row[2], file), to_real(row[1], file)};
        g.side = to_real(row[3], file);
        if (!(g.side > 0.0)) throw std::runtime_error(file.string() + ": ground-truth side must be positive");
        out.push_back(g);
    }
    return out;
}

}  // namespace skywatch
