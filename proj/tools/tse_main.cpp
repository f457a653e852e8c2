// tse: dataset conversion, enhancer training and inference, gradient checks,
// detection scoring and the with/without-enhancement comparison.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tse/checkpoint.hpp"
#include "tse/config_io.hpp"
#include "tse/dataset.hpp"
#include "tse/detection.hpp"
#include "tse/grad_suite.hpp"
#include "tse/image_io.hpp"
#include "tse/kernels.hpp"
#include "tse/pipeline.hpp"
#include "tse/training.hpp"

namespace fs = std::filesystem;
using tse::Json;

namespace {

// Exit codes: 0 success, 1 error, 2 finished with skipped or missing items.
constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kPartial = 2;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    Json load() const { return config.empty() ? Json::object() : tse::load_json_file(config); }
    fs::path base_dir() const { return config.empty() ? fs::path() : fs::path(config).parent_path(); }
    void apply_threads() const {
        if (threads) tse::kernels::set_num_threads(*threads);
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON config; flags override its values")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--threads", c.threads, "OpenMP threads for the kernels")->check(CLI::PositiveNumber);
}

template <typename T>
void override_with(T& target, const std::optional<T>& flag) {
    if (flag) target = *flag;
}

std::string json_string(const Json& j, const char* key) {
    return j.contains(key) ? j.at(key).get<std::string>() : std::string();
}

// ---------------------------------------------------------------- convert

struct ConvertArgs {
    Common common;
    std::string format, input, out, images, quality_images;
    bool broad = false;
    std::optional<double> lum, blur;
};

int run_convert(const ConvertArgs& a) {
    const Json cfg = a.common.load();
    tse::check_keys(cfg, {"format", "input", "out", "images", "broad", "quality_images", "luminance", "blur", "seed"},
                    "convert");
    auto pick = [&](const std::string& flag, const char* key) {
        return flag.empty() ? (json_string(cfg, key).empty() ? std::string() : tse::resolve_path(a.common.base_dir(), json_string(cfg, key)).string()) : flag;
    };
    const std::string format = a.format.empty() ? json_string(cfg, "format") : a.format;
    const fs::path input = pick(a.input, "input"), out = pick(a.out, "out");
    const fs::path images = pick(a.images, "images"), quality_images = pick(a.quality_images, "quality_images");
    const bool broad = a.broad || cfg.value("broad", false);
    if (format != "gtsrb" && format != "gtsdb") throw tse::ConfigError("convert: --format must be gtsrb or gtsdb");
    if (input.empty() || out.empty()) throw tse::ConfigError("convert: --input and --out are required");

    const std::string text = read_text(input);
    tse::AnnotationSet set;
    if (format == "gtsrb") {
        set = tse::parse_gtsrb_csv(text);
    } else {
        tse::ImageSizeLookup lookup;
        if (!images.empty()) {
            lookup = [images](const std::string& name) -> std::optional<tse::ImageSize> {
                const fs::path p = images / name;
                if (!fs::exists(p)) return std::nullopt;
                const auto bytes = tse::read_file_bytes(p);
                return tse::ppm_size(bytes);
            };
        }
        set = tse::parse_gtsdb_gt(text, lookup);
    }
    const auto res = tse::write_yolo_dataset(set.annotations, out, broad);

    Json report;
    report["format"] = format;
    report["input"] = input.string();
    report["annotations"] = set.annotations.size();
    report["files"] = res.files;
    report["clamped_boxes"] = set.clamped;
    report["broad_categories"] = broad;
    report["row_errors"] = Json::array();
    for (const auto& e : set.errors)
        report["row_errors"].push_back(Json{{"line", e.line}, {"text", e.text}, {"message", e.message}});

    if (!quality_images.empty()) {
        tse::QualityThresholds t;
        t.luminance = cfg.value("luminance", t.luminance);
        t.blur = cfg.value("blur", t.blur);
        override_with(t.luminance, a.lum);
        override_with(t.blur, a.blur);
        std::vector<tse::QualityScore> scores;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(quality_images))
            if (e.is_regular_file() && tse::is_image_file(e.path())) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        t.validate();
        for (const auto& f : files) scores.push_back(tse::score_quality(f.stem().string(), tse::read_image(f), t));
        write_text(out / "quality.csv", tse::quality_csv(scores));
        std::size_t selected = 0;
        for (const auto& s : scores) selected += s.selected();
        report["quality"] = Json{{"images", scores.size()}, {"selected", selected}, {"luminance", t.luminance}, {"blur", t.blur}};
    }
    write_text(out / "conversion_report.json", report.dump(2) + "\n");
    std::printf("converted %zu annotations into %zu files (%zu clamped, %zu malformed rows)\n", set.annotations.size(),
                res.files, set.clamped, set.errors.size());
    for (const auto& e : set.errors) std::fprintf(stderr, "line %zu: %s: %s\n", e.line, e.message.c_str(), e.text.c_str());
    return set.errors.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    Common common;
    std::string pairs, val, out, net_preset;
    std::optional<int> epochs, crop, batch, synthetic, synthetic_val, synthetic_size;
    std::optional<double> lr;
};

int run_train(const TrainArgs& a) {
    a.common.apply_threads();
    const Json cfg = a.common.load();
    tse::check_keys(cfg, {"net", "train", "data", "output", "seed"}, "train config");
    tse::NetConfig net = tse::net_config_from_json(cfg.value("net", Json::object()));
    if (!a.net_preset.empty())
        net = tse::net_config_from_json(Json{{"preset", a.net_preset}});
    tse::TrainConfig tc = tse::train_config_from_json(cfg.value("train", Json::object()));
    std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
    override_with(seed, a.common.seed);
    if (cfg.contains("seed") || a.common.seed) {
        net.seed = seed;
        tc.seed = seed;
    }
    override_with(tc.epochs, a.epochs);
    override_with(tc.crop, a.crop);
    override_with(tc.batch, a.batch);
    override_with(tc.lr, a.lr);

    const Json data = cfg.value("data", Json::object());
    tse::check_keys(data, {"pairs", "val", "synthetic"}, "train.data");
    const fs::path base = a.common.base_dir();
    fs::path pairs_dir = a.pairs.empty() ? (data.contains("pairs") ? tse::resolve_path(base, data["pairs"]) : fs::path()) : fs::path(a.pairs);
    fs::path val_dir = a.val.empty() ? (data.contains("val") ? tse::resolve_path(base, data["val"]) : fs::path()) : fs::path(a.val);
    Json synth = data.value("synthetic", Json::object());
    tse::check_keys(synth, {"count", "val_count", "size"}, "train.data.synthetic");
    if (a.synthetic) synth["count"] = *a.synthetic;
    if (a.synthetic_val) synth["val_count"] = *a.synthetic_val;
    if (a.synthetic_size) synth["size"] = *a.synthetic_size;

    std::vector<tse::ImagePair> train_pairs, val_pairs;
    const int count = synth.value("count", 0);
    if (count > 0) {
        const std::size_t size = synth.value("size", 64);
        train_pairs = tse::make_synthetic_pairs(count, size, size, seed);
        val_pairs = tse::make_synthetic_pairs(synth.value("val_count", 0), size, size, seed + 1);
    }
    if (!pairs_dir.empty()) {
        auto loaded = tse::load_image_pairs(pairs_dir);
        train_pairs.insert(train_pairs.end(), loaded.begin(), loaded.end());
    }
    if (!val_dir.empty()) {
        auto loaded = tse::load_image_pairs(val_dir);
        val_pairs.insert(val_pairs.end(), loaded.begin(), loaded.end());
    }
    if (train_pairs.empty()) throw tse::ConfigError("train: no training pairs (use --pairs or --synthetic)");

    fs::path out = a.out.empty() ? (cfg.contains("output") ? tse::resolve_path(base, cfg["output"]) : fs::path()) : fs::path(a.out);
    if (out.empty()) throw tse::ConfigError("train: --out is required");
    fs::create_directories(out);
    tc.curve_output = out / "curve.csv";
    tc.checkpoint_output = out / "model.tsec";

    const auto t0 = std::chrono::steady_clock::now();
    std::printf("training %zu pairs (%zu validation), %zu parameters\n", train_pairs.size(), val_pairs.size(),
                tse::init_model(net).parameter_count());
    const tse::TrainResult result = tse::train(train_pairs, val_pairs, net, tc, [](const tse::CurveRow& row) {
        std::printf("epoch %4d  train_loss %.6f  val_loss %.6f  val_psnr %.3f dB\n", row.epoch, row.train_loss,
                    row.val_loss, row.val_psnr_db);
        std::fflush(stdout);
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Json summary;
    summary["net"] = tse::net_config_to_json(net);
    summary["train"] = tse::train_config_to_json(tc);
    summary["pairs"] = train_pairs.size();
    summary["val_pairs"] = val_pairs.size();
    summary["parameters"] = result.params.parameter_count();
    summary["seconds"] = seconds;
    summary["checkpoint"] = tc.checkpoint_output.string();
    summary["curve"] = tc.curve_output.string();
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        summary["final"] = Json{{"epoch", last.epoch}, {"train_loss", last.train_loss}};
        if (std::isfinite(last.val_loss)) summary["final"]["val_loss"] = last.val_loss;
        if (std::isfinite(last.val_psnr_db)) summary["final"]["val_psnr_db"] = last.val_psnr_db;
    }
    write_text(out / "train_summary.json", summary.dump(2) + "\n");
    return kOk;
}

// ---------------------------------------------------------------- enhance

struct EnhanceArgs {
    Common common;
    std::string checkpoint, input, out, format;
    std::optional<int> tile;
};

int run_enhance(const EnhanceArgs& a) {
    a.common.apply_threads();
    const Json cfg = a.common.load();
    tse::check_keys(cfg, {"checkpoint", "input", "output", "format", "tile", "seed"}, "enhance config");
    const fs::path base = a.common.base_dir();
    auto path = [&](const std::string& flag, const char* key) {
        return !flag.empty() ? fs::path(flag) : (cfg.contains(key) ? tse::resolve_path(base, cfg[key]) : fs::path());
    };
    const fs::path checkpoint = path(a.checkpoint, "checkpoint"), input = path(a.input, "input"), out = path(a.out, "output");
    if (checkpoint.empty() || input.empty() || out.empty())
        throw tse::ConfigError("enhance: --checkpoint, --input and --out are required");
    tse::EnhanceOptions opts;
    opts.tile = a.tile.value_or(cfg.value("tile", 0));
    opts.format = a.format.empty() ? cfg.value("format", std::string()) : a.format;

    std::vector<fs::path> inputs;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && tse::is_image_file(e.path())) inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
    } else {
        inputs.push_back(input);
    }
    if (fs::weakly_canonical(out) == fs::weakly_canonical(fs::is_directory(input) ? input : input.parent_path()))
        throw tse::ConfigError("enhance: output directory must differ from the input directory");
    const tse::ModelParams params = tse::load_checkpoint(checkpoint);
    const auto res = tse::enhance_batch(inputs, params, out, opts);
    std::printf("enhanced %zu images into %s (%zu failed)\n", res.records.size(), out.string().c_str(), res.failures.size());
    for (const auto& f : res.failures) std::fprintf(stderr, "skipped %s: %s\n", f.id.c_str(), f.reason.c_str());
    return res.failures.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------- grad-check

struct GradArgs {
    Common common;
    std::optional<int> seeds;
    std::optional<double> eps;
    std::optional<std::size_t> coords;
    double tolerance = 1e-4;
    std::string out;
};

int run_grad_check(const GradArgs& a) {
    a.common.apply_threads();
    const Json cfg = a.common.load();
    tse::check_keys(cfg, {"seeds", "seed", "eps", "sampled_coords", "directions", "net"}, "grad-check config");
    tse::GradSuiteOptions opts;
    opts.seeds = cfg.value("seeds", opts.seeds);
    opts.first_seed = cfg.value("seed", opts.first_seed);
    opts.eps = cfg.value("eps", opts.eps);
    opts.sampled_coords = cfg.value("sampled_coords", opts.sampled_coords);
    opts.directions = cfg.value("directions", opts.directions);
    if (cfg.contains("net")) opts.config = tse::net_config_from_json(cfg["net"]);
    override_with(opts.seeds, a.seeds);
    override_with(opts.first_seed, a.common.seed);
    override_with(opts.eps, a.eps);
    override_with(opts.sampled_coords, a.coords);

    const auto t0 = std::chrono::steady_clock::now();
    const auto entries = tse::run_gradient_suite(opts);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::map<std::string, tse::GradSuiteEntry> worst;
    std::vector<std::string> order;
    for (const auto& e : entries) {
        auto it = worst.find(e.name);
        if (it == worst.end()) {
            order.push_back(e.name);
            worst[e.name] = e;
        } else if (e.max_rel_error > it->second.max_rel_error) {
            it->second = e;
        }
    }
    bool ok = true;
    std::printf("%-28s %14s %6s %s\n", "case", "max rel error", "seed", "status");
    Json cases = Json::array();
    for (const auto& name : order) {
        const auto& e = worst[name];
        const bool pass = e.max_rel_error <= a.tolerance;
        ok = ok && pass;
        std::printf("%-28s %14.3e %6llu %s\n", name.c_str(), e.max_rel_error, static_cast<unsigned long long>(e.seed),
                    pass ? "ok" : "FAIL");
        cases.push_back(Json{{"case", name}, {"max_rel_error", e.max_rel_error}, {"worst_seed", e.seed}, {"pass", pass}});
    }
    std::printf("%zu checks over %d seeds in %.1f s: %s\n", entries.size(), opts.seeds, seconds, ok ? "PASS" : "FAIL");
    if (!a.out.empty()) {
        write_text(a.out + ".csv", tse::grad_suite_csv(entries));
        Json j{{"tolerance", a.tolerance}, {"seeds", opts.seeds}, {"first_seed", opts.first_seed}, {"eps", opts.eps},
               {"seconds", seconds}, {"pass", ok}, {"cases", cases}};
        write_text(a.out + ".json", j.dump(2) + "\n");
    }
    return ok ? kOk : kError;
}

// ---------------------------------------------------------------- eval-detect

struct EvalArgs {
    Common common;
    std::string gt, det, names, out;
    std::optional<double> iou, conf;
};

int run_eval_detect(const EvalArgs& a) {
    const Json cfg = a.common.load();
    tse::check_keys(cfg, {"ground_truth", "detections", "class_names", "output", "iou_thresh", "conf_thresh", "seed"},
                    "eval-detect config");
    const fs::path base = a.common.base_dir();
    auto path = [&](const std::string& flag, const char* key) {
        return !flag.empty() ? fs::path(flag) : (cfg.contains(key) ? tse::resolve_path(base, cfg[key]) : fs::path());
    };
    const fs::path gt_dir = path(a.gt, "ground_truth"), det_dir = path(a.det, "detections");
    const fs::path names_file = path(a.names, "class_names"), out = path(a.out, "output");
    if (gt_dir.empty() || det_dir.empty()) throw tse::ConfigError("eval-detect: --gt and --det are required");
    const double iou = a.iou.value_or(cfg.value("iou_thresh", 0.5));
    const double conf = a.conf.value_or(cfg.value("conf_thresh", 0.25));

    const auto gt_by_image = tse::load_ground_truth_dir(gt_dir);
    std::vector<std::string> ids;
    std::vector<tse::GroundTruth> gts;
    for (const auto& [id, list] : gt_by_image) {
        ids.push_back(id);
        gts.insert(gts.end(), list.begin(), list.end());
    }
    const tse::DetectionSet dets = tse::load_detections_for(det_dir, ids);
    const tse::EvalReport report = tse::evaluate(dets.detections, gts, iou, conf);
    const std::vector<std::string> names = names_file.empty() ? std::vector<std::string>{} : tse::read_class_names(names_file);
    std::fputs(tse::format_report_table(report, names).c_str(), stdout);
    for (const auto& id : dets.missing) std::fprintf(stderr, "no detections file for %s (scored as empty)\n", id.c_str());
    if (!out.empty()) {
        write_text(out.string() + ".csv", tse::report_csv(report, names));
        Json j = Json::parse(tse::report_json(report, names));
        j["missing_detections"] = dets.missing;
        j["images"] = ids.size();
        write_text(out.string() + ".json", j.dump(2) + "\n");
    }
    return dets.missing.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
    Common common;
    std::string images, gt, checkpoint, out, names, command, precomputed, stub, route;
    std::optional<double> lum, blur, iou, conf;
    std::optional<int> tile;
};

int run_pipeline_cmd(const PipelineArgs& a) {
    a.common.apply_threads();
    tse::PipelineConfig c = tse::pipeline_config_from_json(a.common.load(), a.common.base_dir());
    if (!a.images.empty()) c.images_dir = a.images;
    if (!a.gt.empty()) c.ground_truth_dir = a.gt;
    if (!a.checkpoint.empty()) c.checkpoint = a.checkpoint;
    if (!a.out.empty()) c.output_dir = a.out;
    if (!a.names.empty()) c.class_names = a.names;
    const int detector_flags = !a.command.empty() + !a.precomputed.empty() + !a.stub.empty();
    if (detector_flags > 1) throw tse::ConfigError("pipeline: give only one of --detector-command, --precomputed, --stub");
    if (detector_flags == 1) {
        c.detector = tse::DetectorConfig{};
        if (!a.command.empty()) {
            c.detector.mode = tse::DetectorMode::kCommand;
            c.detector.command = a.command;
        } else if (!a.precomputed.empty()) {
            c.detector.mode = tse::DetectorMode::kPrecomputed;
            c.detector.precomputed_dir = a.precomputed;
        } else {
            c.detector.mode = tse::DetectorMode::kStub;
            c.detector.stub_fixture = a.stub;
        }
    }
    if (!a.route.empty()) {
        if (a.route != "all" && a.route != "quality") throw tse::ConfigError("pipeline: --route must be all or quality");
        c.routing.all = a.route == "all";
    }
    override_with(c.routing.thresholds.luminance, a.lum);
    override_with(c.routing.thresholds.blur, a.blur);
    override_with(c.iou_thresh, a.iou);
    override_with(c.conf_thresh, a.conf);
    override_with(c.tile, a.tile);
    override_with(c.seed, a.common.seed);

    const tse::ComparisonReport r = tse::run_pipeline(c);
    std::fputs(read_text(c.output_dir / "summary.txt").c_str(), stdout);
    std::printf("reports written to %s\n", c.output_dir.string().c_str());
    return r.complete() ? kOk : kPartial;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Traffic-sign enhancement and detection evaluation tools"};
    app.require_subcommand(1);

    ConvertArgs convert;
    auto* cmd_convert = app.add_subcommand("convert", "Convert GTSRB/GTSDB annotations to per-image YOLO files");
    add_common(cmd_convert, convert.common);
    cmd_convert->add_option("--format", convert.format, "gtsrb or gtsdb");
    cmd_convert->add_option("--input", convert.input, "GTSRB CSV or GTSDB gt.txt");
    cmd_convert->add_option("--out", convert.out, "Output directory");
    cmd_convert->add_option("--images", convert.images, "GTSDB image directory, used to read image sizes");
    cmd_convert->add_flag("--broad", convert.broad, "Write broad category ids (Prohibitory, Mandatory, Danger, Other)");
    cmd_convert->add_option("--quality-images", convert.quality_images, "Score these images for low quality");
    cmd_convert->add_option("--lum-thresh", convert.lum, "Mean luminance threshold");
    cmd_convert->add_option("--blur-thresh", convert.blur, "Laplacian variance threshold (8-bit scale)");

    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "Train the enhancer on low/high image pairs");
    add_common(cmd_train, train.common);
    cmd_train->add_option("--pairs", train.pairs, "Directory with low/ and high/ subdirectories");
    cmd_train->add_option("--val", train.val, "Validation directory with low/ and high/");
    cmd_train->add_option("--synthetic", train.synthetic, "Number of synthetic darkened pairs");
    cmd_train->add_option("--synthetic-val", train.synthetic_val, "Number of synthetic validation pairs");
    cmd_train->add_option("--synthetic-size", train.synthetic_size, "Side of synthetic images");
    cmd_train->add_option("--net", train.net_preset, "Network preset: test or full");
    cmd_train->add_option("--epochs", train.epochs);
    cmd_train->add_option("--crop", train.crop);
    cmd_train->add_option("--batch", train.batch);
    cmd_train->add_option("--lr", train.lr);
    cmd_train->add_option("--out", train.out, "Output directory for curve.csv, model.tsec, train_summary.json");

    EnhanceArgs enhance;
    auto* cmd_enhance = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
    add_common(cmd_enhance, enhance.common);
    cmd_enhance->add_option("--checkpoint", enhance.checkpoint);
    cmd_enhance->add_option("--input", enhance.input, "Image file or directory");
    cmd_enhance->add_option("--out", enhance.out, "Output directory");
    cmd_enhance->add_option("--format", enhance.format, "ppm or png (default: keep input format)");
    cmd_enhance->add_option("--tile", enhance.tile, "Process in tiles of this size");

    GradArgs grad;
    auto* cmd_grad = app.add_subcommand("grad-check", "Finite-difference check of every primitive and block");
    add_common(cmd_grad, grad.common);
    cmd_grad->add_option("--seeds", grad.seeds, "Number of seeds");
    cmd_grad->add_option("--eps", grad.eps, "Central-difference step");
    cmd_grad->add_option("--coords", grad.coords, "Sampled coordinates per tensor for MRB and network");
    cmd_grad->add_option("--tolerance", grad.tolerance, "Maximum relative error");
    cmd_grad->add_option("--out", grad.out, "Report prefix (writes .csv and .json)");

    EvalArgs eval;
    auto* cmd_eval = app.add_subcommand("eval-detect", "Score per-image detection files against ground truth");
    add_common(cmd_eval, eval.common);
    cmd_eval->add_option("--gt", eval.gt, "Ground-truth directory");
    cmd_eval->add_option("--det", eval.det, "Detections directory");
    cmd_eval->add_option("--names", eval.names, "classes.names file");
    cmd_eval->add_option("--iou", eval.iou, "IoU threshold");
    cmd_eval->add_option("--conf", eval.conf, "Confidence threshold for P/R/F1");
    cmd_eval->add_option("--out", eval.out, "Report prefix (writes .csv and .json)");

    PipelineArgs pipe;
    auto* cmd_pipe = app.add_subcommand("pipeline", "Compare detection with and without enhancement");
    add_common(cmd_pipe, pipe.common);
    cmd_pipe->add_option("--images", pipe.images);
    cmd_pipe->add_option("--gt", pipe.gt);
    cmd_pipe->add_option("--checkpoint", pipe.checkpoint);
    cmd_pipe->add_option("--out", pipe.out);
    cmd_pipe->add_option("--names", pipe.names);
    cmd_pipe->add_option("--detector-command", pipe.command, "Template with {images}/{out} or {image}/{out}");
    cmd_pipe->add_option("--precomputed", pipe.precomputed, "Directory with raw/ and enhanced/ detection files");
    cmd_pipe->add_option("--stub", pipe.stub, "JSON detection fixture");
    cmd_pipe->add_option("--route", pipe.route, "all or quality");
    cmd_pipe->add_option("--lum-thresh", pipe.lum);
    cmd_pipe->add_option("--blur-thresh", pipe.blur);
    cmd_pipe->add_option("--iou", pipe.iou);
    cmd_pipe->add_option("--conf", pipe.conf);
    cmd_pipe->add_option("--tile", pipe.tile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (cmd_convert->parsed()) return run_convert(convert);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_enhance->parsed()) return run_enhance(enhance);
        if (cmd_grad->parsed()) return run_grad_check(grad);
        if (cmd_eval->parsed()) return run_eval_detect(eval);
        if (cmd_pipe->parsed()) return run_pipeline_cmd(pipe);
    } catch (const tse::DetectorError& e) {
        std::fprintf(stderr, "error: %s%s%s\n", e.what(), e.image_id().empty() ? "" : " [image ",
                     e.image_id().empty() ? "" : (e.image_id() + "]").c_str());
        return kError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kError;
    }
    return kError;
}
