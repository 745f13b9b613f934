#include "skywatch/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "skywatch/detector.hpp"
#include "skywatch/evalkit.hpp"
#include "skywatch/parallel.hpp"
#include "skywatch/synthgen.hpp"

namespace skywatch::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string sha256_bytes(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
    return hex.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Hash of a file, or of every regular file in a directory in name order.
std::string hash_path(const fs::path& p) {
    if (!fs::exists(p)) return "";
    if (!fs::is_directory(p)) return sha256_bytes(slurp(p));
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string combined;
    for (const auto& f : files) combined += fs::relative(f, p).string() + ":" + sha256_bytes(slurp(f)) + "\n";
    return sha256_bytes(combined);
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> models;
    std::vector<fs::path> outputs;
    std::uint64_t seed = 0;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::string started = utc_now();

    void write(const fs::path& file) const {
        json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config"] = config;
        j["seed"] = seed;
        j["toolkit_version"] = SKYWATCH_VERSION;
        json in = json::object();
        for (const auto& p : inputs) in[p.string()] = hash_path(p);
        j["input_hashes"] = in;
        json models_json = json::object();
        for (const auto& p : models) models_json[p.string()] = hash_path(p);
        j["model_hashes"] = models_json;
        json out = json::object();
        for (const auto& p : outputs) out[p.string()] = hash_path(p);
        j["output_hashes"] = out;
        j["started_utc"] = started;
        j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ofstream f(file);
        if (!f) throw std::runtime_error("cannot write manifest " + file.string());
        f << j.dump(2) << '\n';
    }
};

fs::path manifest_path(const std::string& flag, const fs::path& primary) {
    if (!flag.empty()) return flag;
    return fs::path(primary.string() + ".manifest.json");
}

void add_detector_flags(CLI::App* cmd, DetectorConfig& c) {
    cmd->add_option("--stride", c.stride, "Window stride in pixels")->capture_default_str();
    cmd->add_option("--scale-step", c.scale_step, "Pyramid scale ratio")->capture_default_str();
    cmd->add_option("--min-side", c.min_side, "Smallest pyramid side")->capture_default_str();
    cmd->add_option("--upsample", c.upsample, "Scale of the first pyramid level")->capture_default_str();
    cmd->add_option("--threshold", c.threshold, "Score threshold")->capture_default_str();
    cmd->add_option("--nms-overlap", c.nms_overlap, "NMS IoU threshold")->capture_default_str();
    cmd->add_option("--epsilon", c.compensation_config.epsilon, "Compensation stop threshold (squared px)")
        ->capture_default_str();
    cmd->add_option("--max-iter", c.compensation_config.max_iter, "Compensation iteration cap")->capture_default_str();
}

json detector_json(const DetectorConfig& c) {
    return {{"cube", {c.dims.x, c.dims.y, c.dims.t}},
            {"stride", c.stride},
            {"scale_step", c.scale_step},
            {"min_side", c.min_side},
            {"upsample", c.upsample},
            {"threshold", c.threshold},
            {"nms_overlap", c.nms_overlap},
            {"compensation", c.compensation},
            {"epsilon", c.compensation_config.epsilon},
            {"max_iter", c.compensation_config.max_iter},
            {"threads", c.threads}};
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"skywatch: flying-object detection with motion-stabilized spatio-temporal cubes", "skywatch"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SKYWATCH_VERSION);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: SKYWATCH_THREADS or 1)");
    std::string manifest_flag;
    app.add_option("--manifest", manifest_flag, "Run manifest path (default: <output>.manifest.json)");

    std::vector<std::string> args(argv, argv + argc);

    // synth
    auto* synth = app.add_subcommand("synth", "Render a synthetic sequence with ground truth");
    std::string synth_config;
    fs::path synth_out;
    std::int64_t synth_seed = -1;
    synth->add_option("config", synth_config, "Config file or benchmark name (bench-easy, bench-hard, bench-collision)")
        ->required();
    synth->add_option("outdir", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Override the config seed");

    // train-regressor
    auto* train_reg = app.add_subcommand("train-regressor", "Train the horizontal/vertical shift regressors");
    fs::path tr_frames, tr_gt, tr_out;
    RegressorConfig reg_cfg;
    ShiftSampling sampling;
    std::uint64_t tr_seed = 3;
    train_reg->add_option("frames", tr_frames, "Frame directory")->required();
    train_reg->add_option("gt", tr_gt, "Ground-truth CSV")->required();
    train_reg->add_option("out", tr_out, "Output model")->required();
    train_reg->add_option("--rounds", reg_cfg.rounds, "Boosting rounds")->capture_default_str();
    train_reg->add_option("--depth", reg_cfg.max_depth, "Tree depth")->capture_default_str();
    train_reg->add_option("--shrinkage", reg_cfg.shrinkage, "Shrinkage")->capture_default_str();
    train_reg->add_option("--min-leaf", reg_cfg.min_leaf, "Minimum samples per leaf")->capture_default_str();
    train_reg->add_option("--shifts-per-box", sampling.shifts_per_box, "Displaced patches per annotation")
        ->capture_default_str();
    train_reg->add_option("--max-shift", sampling.max_shift, "Largest displacement in patch pixels (<0: half patch)")
        ->capture_default_str();
    train_reg->add_option("--scale-jitter", sampling.scale_jitter, "Log-uniform box scale jitter factor")
        ->capture_default_str();
    train_reg->add_option("--near-shifts-per-box", sampling.near_shifts_per_box,
                          "Extra patches per annotation with small displacements")
        ->capture_default_str();
    train_reg->add_option("--near-max-shift", sampling.near_max_shift, "Largest small displacement in patch pixels")
        ->capture_default_str();
    train_reg->add_option("--seed", tr_seed, "Sampling seed")->capture_default_str();

    // compensate
    auto* comp = app.add_subcommand("compensate", "Measure centering error of cubes before/after compensation");
    fs::path cp_frames, cp_gt, cp_model, cp_report;
    int cp_count = 200;
    double cp_shift = 10.0;
    std::uint64_t cp_seed = 5;
    DetectorConfig cp_cfg;
    comp->add_option("frames", cp_frames, "Frame directory")->required();
    comp->add_option("gt", cp_gt, "Ground-truth CSV")->required();
    comp->add_option("model", cp_model, "Regressor model")->required();
    comp->add_option("report", cp_report, "Per-cube report CSV")->required();
    comp->add_option("--cubes", cp_count, "Number of cubes")->capture_default_str();
    comp->add_option("--max-shift", cp_shift, "Largest anchor displacement in window pixels")->capture_default_str();
    comp->add_option("--seed", cp_seed, "Sampling seed")->capture_default_str();
    add_detector_flags(comp, cp_cfg);

    // train-detector
    auto* train_det = app.add_subcommand("train-detector", "Train the AdaBoost cube classifier");
    fs::path td_frames, td_gt, td_reg, td_out;
    DetectorConfig td_cfg;
    DetectorTraining td_train;
    bool td_no_comp = false;
    std::string td_mode = "gradient-energy";
    train_det->add_option("frames", td_frames, "Frame directory")->required();
    train_det->add_option("gt", td_gt, "Ground-truth CSV")->required();
    train_det->add_option("regressor", td_reg, "Regressor model")->required();
    train_det->add_option("out", td_out, "Output classifier")->required();
    train_det->add_flag("--no-compensation", td_no_comp, "Train on uncompensated cubes");
    train_det->add_option("--feature-mode", td_mode, "gradient-energy or 3d-hog")->capture_default_str();
    train_det->add_option("--rounds", td_train.boost.rounds, "AdaBoost rounds")->capture_default_str();
    train_det->add_option("--pool-size", td_train.boost.pool_size, "Candidate features per round")->capture_default_str();
    train_det->add_option("--min-box-side", td_train.boost.min_box_side, "Smallest candidate box side")
        ->capture_default_str();
    train_det->add_option("--positives-per-box", td_train.positives_per_box, "Jittered windows per ground truth")
        ->capture_default_str();
    train_det->add_option("--negatives-per-frame", td_train.negatives_per_frame, "Random grid windows per frame")
        ->capture_default_str();
    train_det->add_option("--near-negatives-per-box", td_train.near_negatives_per_box,
                          "Displaced windows around each ground truth, used as negatives")
        ->capture_default_str();
    train_det->add_option("--frame-step", td_train.frame_step, "Use every n-th frame")->capture_default_str();
    train_det->add_option("--seed", td_train.seed, "Sampling seed")->capture_default_str();
    add_detector_flags(train_det, td_cfg);

    // detect
    auto* det = app.add_subcommand("detect", "Run multi-scale detection");
    fs::path dt_frames, dt_reg, dt_model, dt_out;
    DetectorConfig dt_cfg;
    bool dt_no_comp = false;
    det->add_option("frames", dt_frames, "Frame directory")->required();
    det->add_option("regressor", dt_reg, "Regressor model")->required();
    det->add_option("detector", dt_model, "Classifier model")->required();
    det->add_option("out", dt_out, "Detections CSV")->required();
    det->add_flag("--no-compensation", dt_no_comp, "Score uncompensated cubes");
    add_detector_flags(det, dt_cfg);

    // eval
    auto* ev = app.add_subcommand("eval", "Precision-recall evaluation");
    fs::path ev_det, ev_gt, ev_pr;
    bool ev_by_size = false;
    double ev_iou = 0.5;
    int ev_min_frame = 0;
    std::vector<double> ev_bins{10.0, 35.0, 75.0, 100.0};
    ev->add_option("detections", ev_det, "Detections CSV")->required();
    ev->add_option("gt", ev_gt, "Ground-truth CSV")->required();
    ev->add_flag("--by-size", ev_by_size, "Also report AveP per ground-truth size bin");
    ev->add_option("--size-bins", ev_bins, "Size bin edges in pixels")->delimiter(',')->capture_default_str();
    ev->add_option("--iou", ev_iou, "IoU needed for a true positive")->capture_default_str();
    ev->add_option("--min-frame", ev_min_frame, "Ignore ground truth before this frame")->capture_default_str();
    ev->add_option("--pr-out", ev_pr, "Write the PR curve CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << SKYWATCH_VERSION << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return 2;
    }

    const int worker_threads = resolve_threads(threads);
    Manifest manifest;
    manifest.argv = args;

    try {
        if (*synth) {
            manifest.command = "synth";
            SynthConfig cfg;
            if (is_named_benchmark(synth_config)) {
                cfg = named_benchmark(synth_config);
            } else {
                manifest.inputs.push_back(synth_config);
                cfg = load_synth_config(synth_config);
            }
            if (synth_seed >= 0) cfg.seed = static_cast<std::uint64_t>(synth_seed);
            const SyntheticSequence seq = generate_sequence(cfg);
            write_sequence(synth_out, seq, cfg);
            manifest.config = {{"synth", format_synth_config(cfg)}};
            manifest.seed = cfg.seed;
            manifest.outputs = {synth_out / "frames", synth_out / "gt.csv"};
            manifest.write(manifest_flag.empty() ? synth_out / "manifest.json" : fs::path(manifest_flag));
            out << "wrote " << seq.frames.size() << " frames and " << seq.ground_truth.size() << " boxes to "
                << synth_out.string() << '\n';
        } else if (*train_reg) {
            manifest.command = "train-regressor";
            const auto frames = load_frame_sequence(tr_frames);
            const auto gt = read_ground_truth_csv(tr_gt);
            const auto annotations = annotations_from_ground_truth(gt);
            const auto samples = make_shift_samples(annotations, frames, tr_seed, sampling);
            if (samples.size() < 2) throw std::runtime_error("too few shift samples to train");
            const ShiftRegressor model = train_regressor(samples, reg_cfg);
            save_regressor(tr_out, model);
            manifest.config = {{"rounds", reg_cfg.rounds},
                               {"max_depth", reg_cfg.max_depth},
                               {"shrinkage", reg_cfg.shrinkage},
                               {"min_leaf", reg_cfg.min_leaf},
                               {"shifts_per_box", sampling.shifts_per_box},
                               {"max_shift", sampling.max_shift},
                               {"scale_jitter", sampling.scale_jitter},
                               {"near_shifts_per_box", sampling.near_shifts_per_box},
                               {"near_max_shift", sampling.near_max_shift}};
            manifest.seed = tr_seed;
            manifest.inputs = {tr_frames, tr_gt};
            manifest.outputs = {tr_out};
            manifest.write(manifest_path(manifest_flag, tr_out));
            out << "trained regressor on " << samples.size() << " samples; final MSE h="
                << model.horizontal_loss.back() << " v=" << model.vertical_loss.back() << '\n';
        } else if (*comp) {
            manifest.command = "compensate";
            cp_cfg.threads = worker_threads;
            const auto frames = load_frame_sequence(cp_frames);
            const auto gt = read_ground_truth_csv(cp_gt);
            const ShiftRegressor model = load_regressor(cp_model);
            cp_cfg.dims.x = model.patch_size.x;
            cp_cfg.dims.y = model.patch_size.y;
            const auto results = centering_study(frames, gt, model, cp_cfg, cp_count, cp_shift, cp_seed);
            std::ofstream report(cp_report);
            if (!report) throw std::runtime_error("cannot write " + cp_report.string());
            report << "frame,center_x,center_y,side,scale,error_before,error_after,converged_slices,slices\n";
            double before = 0.0, after = 0.0;
            int halved = 0, converged = 0, slices = 0;
            for (const auto& r : results) {
                report << r.anchor_box.frame << ',' << fixed6(r.anchor_box.center.j) << ','
                       << fixed6(r.anchor_box.center.i) << ',' << fixed6(r.anchor_box.side) << ',' << fixed6(r.scale)
                       << ',' << fixed6(r.error_before) << ',' << fixed6(r.error_after) << ',' << r.converged_slices
                       << ',' << r.slices << '\n';
                before += r.error_before;
                after += r.error_after;
                if (r.error_after * 2.0 <= r.error_before) ++halved;
                converged += r.converged_slices;
                slices += r.slices;
            }
            const double n = std::max<std::size_t>(results.size(), 1);
            out << "cubes " << results.size() << "\nmean_error_before " << fixed6(before / n) << "\nmean_error_after "
                << fixed6(after / n) << "\nhalved_fraction " << fixed6(halved / n) << "\nconverged_fraction "
                << fixed6(slices ? static_cast<double>(converged) / slices : 0.0) << '\n';
            manifest.config = detector_json(cp_cfg);
            manifest.config["cubes"] = cp_count;
            manifest.config["max_shift"] = cp_shift;
            manifest.seed = cp_seed;
            manifest.inputs = {cp_frames, cp_gt};
            manifest.models = {cp_model};
            manifest.outputs = {cp_report};
            manifest.write(manifest_path(manifest_flag, cp_report));
        } else if (*train_det) {
            manifest.command = "train-detector";
            td_cfg.threads = worker_threads;
            td_cfg.compensation = !td_no_comp;
            td_train.boost.mode = parse_feature_mode(td_mode);
            const auto frames = load_frame_sequence(td_frames);
            const auto gt = read_ground_truth_csv(td_gt);
            const ShiftRegressor regressor = load_regressor(td_reg);
            td_cfg.dims.x = regressor.patch_size.x;
            td_cfg.dims.y = regressor.patch_size.y;
            AdaBoostTrace trace;
            const CubeClassifier model = train_detector(frames, gt, regressor, td_cfg, td_train, &trace);
            save_classifier(td_out, model);
            manifest.config = detector_json(td_cfg);
            manifest.config["feature_mode"] = td_mode;
            manifest.config["rounds"] = td_train.boost.rounds;
            manifest.config["pool_size"] = td_train.boost.pool_size;
            manifest.config["positives_per_box"] = td_train.positives_per_box;
            manifest.config["negatives_per_frame"] = td_train.negatives_per_frame;
            manifest.config["near_negatives_per_box"] = td_train.near_negatives_per_box;
            manifest.seed = td_train.seed;
            manifest.inputs = {td_frames, td_gt};
            manifest.models = {td_reg};
            manifest.outputs = {td_out};
            manifest.write(manifest_path(manifest_flag, td_out));
            out << "trained " << model.size() << " weak learners; training error "
                << (trace.training_errors.empty() ? 1.0 : trace.training_errors.back()) << '\n';
        } else if (*det) {
            manifest.command = "detect";
            dt_cfg.threads = worker_threads;
            dt_cfg.compensation = !dt_no_comp;
            const auto frames = load_frame_sequence(dt_frames);
            const ShiftRegressor regressor = load_regressor(dt_reg);
            const CubeClassifier classifier = load_classifier(dt_model);
            dt_cfg.dims = classifier.dims;
            if (classifier.compensated != dt_cfg.compensation)
                err << "warning: classifier was trained " << (classifier.compensated ? "with" : "without")
                    << " compensation but detection runs " << (dt_cfg.compensation ? "with" : "without") << " it\n";
            const auto detections = detect(frames, regressor, classifier, dt_cfg);
            write_detections_csv(dt_out, detections);
            manifest.config = detector_json(dt_cfg);
            manifest.inputs = {dt_frames};
            manifest.models = {dt_reg, dt_model};
            manifest.outputs = {dt_out};
            manifest.write(manifest_path(manifest_flag, dt_out));
            out << "wrote " << detections.size() << " detections\n";
        } else if (*ev) {
            manifest.command = "eval";
            const auto detections = read_detections_csv(ev_det);
            auto gt = read_ground_truth_csv(ev_gt);
            std::erase_if(gt, [&](const GroundTruthBox& g) { return g.frame < ev_min_frame; });
            const PRCurve curve = pr_curve(detections, gt, ev_iou);
            out << "AveP " << fixed6(average_precision(curve)) << '\n';
            if (ev_by_size) {
                for (const auto& bin : avep_by_size(detections, gt, ev_bins, ev_iou))
                    out << "AveP[" << bin.lower << "," << bin.upper << ") " << fixed6(bin.avep) << " (" << bin.gt_count
                        << " boxes)\n";
            }
            manifest.config = {{"iou", ev_iou}, {"by_size", ev_by_size}, {"min_frame", ev_min_frame}};
            manifest.inputs = {ev_det, ev_gt};
            if (!ev_pr.empty()) {
                write_pr_csv(ev_pr, curve);
                manifest.outputs = {ev_pr};
            }
            if (!manifest_flag.empty()) manifest.write(manifest_flag);
            else if (!ev_pr.empty()) manifest.write(manifest_path("", ev_pr));
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace skywatch::cli
