#include "tse/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tse/checkpoint.hpp"
#include "tse/image_io.hpp"

namespace tse {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const char* arm_name(Arm arm) { return arm == Arm::kRaw ? "raw" : "enhanced"; }

namespace {

Tensor enhance_padded(const ModelParams& params, const Tensor& image) {
    const Padding pad = centered_padding(image.shape(), params.config.resolution_divisor());
    if (pad.none()) return enhance(params, image);
    const Tensor out = enhance(params, reflect_pad(image, pad));
    return crop_spatial(out, pad.top, pad.left, image.shape().h, image.shape().w);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw PipelineError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ordered_json padding_json(const Padding& p) {
    return ordered_json{{"top", p.top}, {"bottom", p.bottom}, {"left", p.left}, {"right", p.right}};
}

}  // namespace

Tensor enhance_image(const ModelParams& params, const Tensor& image, int tile) {
    if (tile <= 0) return enhance_padded(params, image);
    const std::size_t t = static_cast<std::size_t>(tile);
    if (t % params.config.resolution_divisor() != 0)
        throw ConfigError("tile " + std::to_string(tile) + " is not a multiple of the network divisor " +
                          std::to_string(params.config.resolution_divisor()));
    const Shape& s = image.shape();
    Tensor out(s);
    for (std::size_t y0 = 0; y0 < s.h; y0 += t)
        for (std::size_t x0 = 0; x0 < s.w; x0 += t) {
            const std::size_t h = std::min(t, s.h - y0), w = std::min(t, s.w - x0);
            const Tensor piece = enhance_padded(params, crop_spatial(image, y0, x0, h, w));
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c)
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t x = 0; x < w; ++x) out.at(n, c, y0 + y, x0 + x) = piece.at(n, c, y, x);
        }
    return out;
}

EnhanceBatchResult enhance_batch(const std::vector<fs::path>& inputs, const ModelParams& params,
                                 const fs::path& out_dir, const EnhanceOptions& options) {
    if (!options.format.empty() && options.format != "ppm" && options.format != "png")
        throw ConfigError("enhance: format must be ppm or png, got '" + options.format + "'");
    fs::create_directories(out_dir);
    EnhanceBatchResult result;
    ordered_json manifest;
    manifest["divisor"] = params.config.resolution_divisor();
    manifest["tile"] = options.tile;
    auto& images = manifest["images"] = ordered_json::array();
    for (const auto& input : inputs) {
        const std::string id = input.stem().string();
        Tensor image;
        try {
            image = read_image(input);
        } catch (const std::exception& e) {
            result.failures.push_back({id, e.what()});
            continue;
        }
        const std::string ext = options.format.empty() ? input.extension().string() : "." + options.format;
        EnhanceRecord rec{id, input, out_dir / (id + ext), image.shape().h, image.shape().w,
                          centered_padding(image.shape(), params.config.resolution_divisor())};
        write_image(rec.output, enhance_image(params, image, options.tile));
        images.push_back(ordered_json{{"id", rec.id},
                                      {"input", rec.input.string()},
                                      {"output", rec.output.string()},
                                      {"height", rec.height},
                                      {"width", rec.width},
                                      {"padding", padding_json(rec.padding)}});
        result.records.push_back(std::move(rec));
    }
    auto& failed = manifest["failed"] = ordered_json::array();
    for (const auto& f : result.failures) failed.push_back(ordered_json{{"id", f.id}, {"reason", f.reason}});
    write_text(options.manifest.empty() ? out_dir / "manifest.json" : options.manifest, manifest.dump(2) + "\n");
    return result;
}

namespace {

std::map<std::string, std::vector<Detection>> parse_stub_table(const ordered_json& table) {
    if (!table.is_object()) throw PipelineError("stub fixture: detection table must be an object");
    std::map<std::string, std::vector<Detection>> out;
    for (const auto& [id, rows] : table.items()) {
        auto& dets = out[id];
        if (!rows.is_array()) throw PipelineError("stub fixture: entry '" + id + "' must be an array");
        for (const auto& row : rows) {
            if (!row.is_array() || row.size() != 6)
                throw PipelineError("stub fixture: detections of '" + id + "' must be [cls, conf, cx, cy, w, h]");
            Detection d;
            d.image_id = id;
            d.class_id = row[0].get<int>();
            d.confidence = row[1].get<double>();
            d.box = BBox::from_center(row[2].get<double>(), row[3].get<double>(), row[4].get<double>(),
                                      row[5].get<double>());
            if (d.confidence < 0 || d.confidence > 1 || !d.box.valid() || d.class_id < 0)
                throw PipelineError("stub fixture: invalid detection for '" + id + "'");
            dets.push_back(d);
        }
    }
    return out;
}

}  // namespace

StubDetector StubDetector::from_json(std::string_view text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw PipelineError(std::string("stub fixture: ") + e.what());
    }
    StubDetector stub;
    try {
        if (j.contains("shared")) {
            if (j.contains("raw") || j.contains("enhanced"))
                throw PipelineError("stub fixture: use either 'shared' or 'raw'/'enhanced'");
            stub.raw_ = parse_stub_table(j["shared"]);
            stub.enhanced_ = stub.raw_;
        } else {
            if (!j.contains("raw") || !j.contains("enhanced"))
                throw PipelineError("stub fixture: needs 'shared' or both 'raw' and 'enhanced'");
            stub.raw_ = parse_stub_table(j["raw"]);
            stub.enhanced_ = parse_stub_table(j["enhanced"]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw PipelineError(std::string("stub fixture: ") + e.what());
    }
    return stub;
}

StubDetector StubDetector::from_file(const fs::path& path) { return from_json(read_text(path)); }

std::optional<std::vector<Detection>> StubDetector::lookup(Arm arm, const std::string& image_id) const {
    const auto& table = arm == Arm::kRaw ? raw_ : enhanced_;
    const auto it = table.find(image_id);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

void PipelineConfig::validate() const {
    if (images_dir.empty() || !fs::is_directory(images_dir))
        throw ConfigError("pipeline: images directory '" + images_dir.string() + "' does not exist");
    if (ground_truth_dir.empty() || !fs::is_directory(ground_truth_dir))
        throw ConfigError("pipeline: ground-truth directory '" + ground_truth_dir.string() + "' does not exist");
    if (output_dir.empty()) throw ConfigError("pipeline: output directory is required");
    const auto out = fs::weakly_canonical(output_dir);
    for (const auto& in : {images_dir, ground_truth_dir}) {
        const auto c = fs::weakly_canonical(in);
        if (out == c) throw ConfigError("pipeline: output directory must differ from " + in.string());
    }
    const int set = !detector.command.empty() + !detector.precomputed_dir.empty() + !detector.stub_fixture.empty();
    if (set != 1) throw ConfigError("pipeline: set exactly one detector (command, precomputed or stub)");
    const bool matches = (detector.mode == DetectorMode::kCommand && !detector.command.empty()) ||
                         (detector.mode == DetectorMode::kPrecomputed && !detector.precomputed_dir.empty()) ||
                         (detector.mode == DetectorMode::kStub && !detector.stub_fixture.empty());
    if (!matches) throw ConfigError("pipeline: detector mode does not match the configured detector");
    if (detector.mode == DetectorMode::kCommand && detector.command.find("{out}") == std::string::npos)
        throw ConfigError("pipeline: detector command needs an {out} placeholder");
    if (detector.mode == DetectorMode::kCommand && detector.command.find("{images}") == std::string::npos &&
        detector.command.find("{image}") == std::string::npos)
        throw ConfigError("pipeline: detector command needs {images} or {image}");
    if (!(iou_thresh > 0 && iou_thresh < 1)) throw ConfigError("pipeline: iou threshold must lie in (0, 1)");
    if (!(conf_thresh >= 0 && conf_thresh <= 1)) throw ConfigError("pipeline: confidence threshold must lie in [0, 1]");
    if (tile < 0) throw ConfigError("pipeline: tile must be non-negative");
    if (!routing.all) routing.thresholds.validate();
}

ComparisonReport compare_reports(const EvalReport& raw, const EvalReport& enhanced) {
    ComparisonReport r;
    r.raw = raw;
    r.enhanced = enhanced;
    for (const auto& [cls, stats] : enhanced.per_class) {
        const auto it = raw.per_class.find(cls);
        if (it == raw.per_class.end() || !stats.ap || !it->second.ap) continue;
        r.delta_ap[cls] = *stats.ap - *it->second.ap;
    }
    r.delta_map = enhanced.map - raw.map;
    return r;
}

namespace {

std::string label(int cls, const std::vector<std::string>& names) {
    return cls >= 0 && static_cast<std::size_t>(cls) < names.size() ? names[cls] : std::to_string(cls);
}

std::string ap_text(const EvalReport& r, int cls) {
    const auto it = r.per_class.find(cls);
    if (it == r.per_class.end() || !it->second.ap) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *it->second.ap * 100);
    return buf;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
        text.replace(pos, key.size(), value);
    return text;
}

void run_command(const std::string& cmd, const std::string& what, const std::string& image_id) {
    const int status = std::system(cmd.c_str());
    if (status != 0)
        throw DetectorError("detector failed on " + what + " (status " + std::to_string(status) + "): " + cmd,
                            image_id);
}

}  // namespace

std::string comparison_table(const ComparisonReport& r, const std::vector<std::string>& class_names) {
    std::set<int> classes;
    for (const auto& [c, s] : r.raw.per_class) classes.insert(c);
    for (const auto& [c, s] : r.enhanced.per_class) classes.insert(c);
    std::size_t width = 5;
    for (int c : classes) width = std::max(width, label(c, class_names).size());
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s\n", static_cast<int>(width), "Class", "AP raw", "AP enh",
                  "dAP");
    out << buf;
    for (int c : classes) {
        const auto d = r.delta_ap.find(c);
        char delta[32] = "-";
        if (d != r.delta_ap.end()) std::snprintf(delta, sizeof delta, "%+.2f", d->second * 100);
        std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s\n", static_cast<int>(width), label(c, class_names).c_str(),
                      ap_text(r.raw, c).c_str(), ap_text(r.enhanced, c).c_str(), delta);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s %10.2f %10.2f %+10.2f\n", static_cast<int>(width), "mAP", r.raw.map * 100,
                  r.enhanced.map * 100, r.delta_map * 100);
    out << buf;
    return out.str();
}

std::string comparison_csv(const ComparisonReport& r) {
    std::ostringstream out;
    out << "class_id,ap_raw,ap_enhanced,delta_ap\n";
    char buf[128];
    for (const auto& [cls, delta] : r.delta_ap) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g\n", cls, *r.raw.per_class.at(cls).ap,
                      *r.enhanced.per_class.at(cls).ap, delta);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mAP,%.10g,%.10g,%.10g\n", r.raw.map, r.enhanced.map, r.delta_map);
    out << buf;
    return out.str();
}

std::string comparison_json(const ComparisonReport& r) {
    ordered_json j;
    j["complete"] = r.complete();
    j["raw"] = ordered_json::parse(report_json(r.raw));
    j["enhanced"] = ordered_json::parse(report_json(r.enhanced));
    auto& deltas = j["delta_ap"] = ordered_json::object();
    for (const auto& [cls, d] : r.delta_ap) deltas[std::to_string(cls)] = d;
    j["delta_map"] = r.delta_map;
    j["images"] = r.images;
    j["routed"] = r.routed;
    auto& skipped = j["skipped"] = ordered_json::array();
    for (const auto& s : r.skipped) skipped.push_back(ordered_json{{"id", s.id}, {"reason", s.reason}});
    j["missing_detections"] = ordered_json{{"raw", r.missing_raw}, {"enhanced", r.missing_enhanced}};
    return j.dump(2) + "\n";
}

ComparisonReport run_pipeline(const PipelineConfig& config) {
    config.validate();
    const fs::path out = config.output_dir;
    const fs::path arm_dir = out / "enhanced";
    fs::create_directories(arm_dir);
    fs::create_directories(out / "detections" / "raw");
    fs::create_directories(out / "detections" / "enhanced");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config.images_dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<std::string> ids;
    std::map<std::string, fs::path> path_of;
    std::vector<QualityScore> scores;
    std::vector<EnhanceFailure> skipped;
    for (const auto& f : files) {
        const std::string id = f.stem().string();
        if (path_of.count(id)) throw PipelineError("pipeline: two images share the id '" + id + "'");
        path_of[id] = f;
        try {
            scores.push_back(score_quality(id, read_image(f), config.routing.thresholds));
            ids.push_back(id);
        } catch (const std::exception& e) {
            skipped.push_back({id, e.what()});
        }
    }
    write_text(out / "routing.csv", quality_csv(scores));

    std::vector<fs::path> routed_paths;
    std::vector<std::string> routed;
    for (const auto& s : scores)
        if (config.routing.all || s.selected()) {
            routed.push_back(s.id);
            routed_paths.push_back(path_of[s.id]);
        }

    // Enhanced arm: routed images go through the enhancer, the rest are copied.
    std::set<std::string> routed_set(routed.begin(), routed.end());
    if (!routed.empty()) {
        if (config.checkpoint.empty()) throw ConfigError("pipeline: images were routed for enhancement but no checkpoint is set");
        const ModelParams params = load_checkpoint(config.checkpoint);
        EnhanceOptions opts;
        opts.tile = config.tile;
        opts.manifest = out / "enhance_manifest.json";
        const auto res = enhance_batch(routed_paths, params, arm_dir, opts);
        for (const auto& f : res.failures) {
            skipped.push_back(f);
            routed_set.erase(f.id);
        }
    }
    for (const auto& id : ids)
        if (!routed_set.count(id)) fs::copy_file(path_of[id], arm_dir / path_of[id].filename(), fs::copy_options::overwrite_existing);
    std::set<std::string> skipped_ids;
    for (const auto& s : skipped) skipped_ids.insert(s.id);
    std::vector<std::string> scored;
    for (const auto& id : ids)
        if (!skipped_ids.count(id)) scored.push_back(id);

    std::map<Arm, DetectionSet> dets;
    for (Arm arm : {Arm::kRaw, Arm::kEnhanced}) {
        const fs::path det_dir = out / "detections" / arm_name(arm);
        const fs::path image_dir = arm == Arm::kRaw ? config.images_dir : arm_dir;
        const DetectorConfig& d = config.detector;
        if (d.mode == DetectorMode::kStub) {
            const StubDetector stub = StubDetector::from_file(d.stub_fixture);
            DetectionSet set;
            for (const auto& id : scored) {
                auto found = stub.lookup(arm, id);
                if (!found) {
                    set.missing.push_back(id);
                    continue;
                }
                write_text(det_dir / (id + ".txt"), format_detections(*found));
                set.detections.insert(set.detections.end(), found->begin(), found->end());
            }
            dets[arm] = std::move(set);
            continue;
        }
        if (d.mode == DetectorMode::kCommand) {
            const std::string base = substitute(d.command, "{out}", shell_quote(det_dir.string()));
            if (d.command.find("{image}") != std::string::npos) {
                for (const auto& id : scored) {
                    const fs::path img = image_dir / path_of[id].filename();
                    std::string cmd = substitute(base, "{image}", shell_quote(img.string()));
                    cmd = substitute(cmd, "{id}", shell_quote(id));
                    run_command(cmd, std::string(arm_name(arm)) + " image " + id, id);
                }
            } else {
                run_command(substitute(base, "{images}", shell_quote(image_dir.string())),
                            std::string(arm_name(arm)) + " arm", "");
            }
            dets[arm] = load_detections_for(det_dir, scored);
        } else {
            dets[arm] = load_detections_for(d.precomputed_dir / arm_name(arm), scored);
        }
    }

    std::vector<GroundTruth> gts;
    const auto gt_by_image = load_ground_truth_dir(config.ground_truth_dir);
    for (const auto& id : scored) {
        const auto it = gt_by_image.find(id);
        if (it != gt_by_image.end()) gts.insert(gts.end(), it->second.begin(), it->second.end());
    }
    const EvalReport raw = evaluate(dets[Arm::kRaw].detections, gts, config.iou_thresh, config.conf_thresh);
    const EvalReport enh = evaluate(dets[Arm::kEnhanced].detections, gts, config.iou_thresh, config.conf_thresh);
    ComparisonReport report = compare_reports(raw, enh);
    report.images = ids;
    report.routed.assign(routed_set.begin(), routed_set.end());
    report.skipped = skipped;
    report.missing_raw = dets[Arm::kRaw].missing;
    report.missing_enhanced = dets[Arm::kEnhanced].missing;

    std::vector<std::string> names;
    if (!config.class_names.empty()) names = read_class_names(config.class_names);
    write_text(out / "raw_eval.csv", report_csv(raw, names));
    write_text(out / "enhanced_eval.csv", report_csv(enh, names));
    write_text(out / "comparison.csv", comparison_csv(report));
    ordered_json j = ordered_json::parse(comparison_json(report));
    j["seed"] = config.seed;
    write_text(out / "report.json", j.dump(2) + "\n");
    std::string summary = "Without enhancement\n" + format_report_table(raw, names) + "\nWith enhancement\n" +
                          format_report_table(enh, names) + "\nComparison\n" + comparison_table(report, names);
    if (!report.complete()) {
        summary += "\nIncomplete run:\n";
        for (const auto& s : report.skipped) summary += "  skipped " + s.id + ": " + s.reason + "\n";
        for (const auto& id : report.missing_raw) summary += "  no raw detections file for " + id + "\n";
        for (const auto& id : report.missing_enhanced) summary += "  no enhanced detections file for " + id + "\n";
    }
    write_text(out / "summary.txt", summary);
    return report;
}

}  // namespace tse
