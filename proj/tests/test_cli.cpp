#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "skywatch/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run run(std::initializer_list<std::string> args) {
    std::vector<std::string> storage{"skywatch"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : storage) argv.push_back(s.c_str());
    std::ostringstream out, err;
    const int status = skywatch::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("skywatch_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const fs::path kData = SKYWATCH_TEST_DATA;

}  // namespace

TEST_CASE("eval on the perfect toy fixture prints AveP 1") {
    const Run r = run({"eval", (kData / "toy_detections.csv").string(), (kData / "toy_gt.csv").string()});
    CHECK(r.status == 0);
    CHECK(r.out.find("AveP 1.000000") != std::string::npos);
}

TEST_CASE("eval by size reports every populated bin") {
    const Run r = run({"eval", (kData / "toy_detections.csv").string(), (kData / "toy_gt.csv").string(), "--by-size",
                       "--size-bins", "5,12,20"});
    CHECK(r.status == 0);
    CHECK(r.out.find("AveP[5,12) 1.000000 (2 boxes)") != std::string::npos);
    CHECK(r.out.find("AveP[12,20) 1.000000 (1 boxes)") != std::string::npos);
}

TEST_CASE("usage errors exit 2 with the error prefix and usage text") {
    const Run unknown = run({"frobnicate"});
    CHECK(unknown.status == 2);
    CHECK(unknown.err.rfind("error:", 0) == 0);
    CHECK(unknown.err.find("train-detector") != std::string::npos);
    CHECK(run({}).status == 2);
    CHECK(run({"eval", "only-one-arg.csv"}).status == 2);
    CHECK(run({"eval", "a.csv", "b.csv", "--iou", "not-a-number"}).status == 2);
}

TEST_CASE("runtime failures exit 1 with the error prefix") {
    const Run r = run({"eval", "/nonexistent/d.csv", (kData / "toy_gt.csv").string()});
    CHECK(r.status == 1);
    CHECK(r.err.rfind("error:", 0) == 0);
    const Run bad = run({"synth", "no-such-config.txt", fresh_dir("bad").string()});
    CHECK(bad.status == 1);
}

TEST_CASE("help exits 0") {
    const Run r = run({"--help"});
    CHECK(r.status == 0);
    CHECK(r.out.find("synth") != std::string::npos);
}

TEST_CASE("synth, train-regressor and compensate write outputs and manifests") {
    const fs::path dir = fresh_dir("pipeline");
    {
        std::ofstream cfg(dir / "small.txt");
        cfg << "width = 120\nheight = 90\nframes = 6\ntargets = 2\nside_min = 20\nside_max = 30\nseed = 4\n";
    }
    const Run s = run({"synth", (dir / "small.txt").string(), (dir / "seq").string()});
    REQUIRE(s.status == 0);
    CHECK(fs::exists(dir / "seq" / "gt.csv"));
    const auto synth_manifest = nlohmann::json::parse(slurp(dir / "seq" / "manifest.json"));
    CHECK(synth_manifest["command"] == "synth");
    CHECK(synth_manifest["seed"] == 4);
    CHECK(synth_manifest.contains("toolkit_version"));
    CHECK(synth_manifest.contains("wall_clock_s"));
    CHECK(!synth_manifest["input_hashes"].empty());

    const std::string config_before = slurp(dir / "small.txt");
    const Run t = run({"train-regressor", (dir / "seq" / "frames").string(), (dir / "seq" / "gt.csv").string(),
                       (dir / "reg.model").string(), "--rounds", "5", "--shifts-per-box", "4"});
    REQUIRE(t.status == 0);
    CHECK(fs::exists(dir / "reg.model"));
    const auto reg_manifest = nlohmann::json::parse(slurp(dir / "reg.model.manifest.json"));
    CHECK(reg_manifest["command"] == "train-regressor");
    CHECK(reg_manifest["config"]["rounds"] == 5);
    CHECK(!reg_manifest["output_hashes"].empty());
    CHECK(slurp(dir / "small.txt") == config_before);

    const Run c = run({"compensate", (dir / "seq" / "frames").string(), (dir / "seq" / "gt.csv").string(),
                       (dir / "reg.model").string(), (dir / "report.csv").string(), "--cubes", "4"});
    REQUIRE(c.status == 0);
    CHECK(c.out.find("mean_error_before") != std::string::npos);
    std::ifstream report(dir / "report.csv");
    int lines = 0;
    for (std::string line; std::getline(report, line);) ++lines;
    CHECK(lines == 5);
    CHECK(fs::exists(dir / "report.csv.manifest.json"));
}
