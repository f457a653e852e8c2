#pragma once

// Two-arm detection comparison: raw images versus images whose low-quality
// members went through the enhancer, scored by the same detector.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tse/dataset.hpp"
#include "tse/detection.hpp"
#include "tse/image_ops.hpp"
#include "tse/model.hpp"

namespace tse {

class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DetectorError : public PipelineError {
public:
    DetectorError(const std::string& what, std::string image_id) : PipelineError(what), image_id_(std::move(image_id)) {}
    const std::string& image_id() const { return image_id_; }

private:
    std::string image_id_;
};

enum class Arm { kRaw, kEnhanced };
const char* arm_name(Arm arm);

/// Enhances one image, reflect-padding to the network's divisor and cropping
/// back. With tile > 0 the image is processed in tile x tile windows.
Tensor enhance_image(const ModelParams& params, const Tensor& image, int tile = 0);

struct EnhanceOptions {
    int tile = 0;
    std::string format;  // "ppm", "png" or empty to keep the input extension
    std::filesystem::path manifest;  // defaults to out_dir/manifest.json
};

struct EnhanceRecord {
    std::string id;
    std::filesystem::path input;
    std::filesystem::path output;
    std::size_t height = 0;
    std::size_t width = 0;
    Padding padding;
};

struct EnhanceFailure {
    std::string id;
    std::string reason;
};

struct EnhanceBatchResult {
    std::vector<EnhanceRecord> records;
    std::vector<EnhanceFailure> failures;
};

/// Writes out_dir/<id>.<ext> per input plus a JSON manifest. Inputs that fail
/// to decode are listed as failures and skipped.
EnhanceBatchResult enhance_batch(const std::vector<std::filesystem::path>& inputs, const ModelParams& params,
                                 const std::filesystem::path& out_dir, const EnhanceOptions& options = {});

/// Fixture-backed detector: {"raw": {id: [[cls, conf, cx, cy, w, h], ...]}, "enhanced": {...}}
/// or {"shared": {...}} for both arms. Images absent from the table have no
/// detections file.
class StubDetector {
public:
    static StubDetector from_json(std::string_view text);
    static StubDetector from_file(const std::filesystem::path& path);
    std::optional<std::vector<Detection>> lookup(Arm arm, const std::string& image_id) const;

private:
    std::map<std::string, std::vector<Detection>> raw_, enhanced_;
};

enum class DetectorMode { kCommand, kPrecomputed, kStub };

struct DetectorConfig {
    DetectorMode mode = DetectorMode::kStub;
    /// Shell template. Batch form uses {images} and {out}; per-image form uses
    /// {image} and {out}. Either way one <id>.txt per image must appear in {out}.
    std::string command;
    std::filesystem::path precomputed_dir;  // holds raw/ and enhanced/
    std::filesystem::path stub_fixture;
};

struct RoutingConfig {
    bool all = false;  // enhance every image instead of only low-quality ones
    QualityThresholds thresholds;
};

struct PipelineConfig {
    std::filesystem::path images_dir;
    std::filesystem::path ground_truth_dir;
    std::filesystem::path checkpoint;
    std::filesystem::path output_dir;
    std::filesystem::path class_names;  // optional
    DetectorConfig detector;
    RoutingConfig routing;
    double iou_thresh = 0.5;
    double conf_thresh = 0.25;
    int tile = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ComparisonReport {
    EvalReport raw;
    EvalReport enhanced;
    std::map<int, double> delta_ap;  // classes with an AP in both arms
    double delta_map = 0.0;
    std::vector<std::string> images;
    std::vector<std::string> routed;
    std::vector<EnhanceFailure> skipped;
    std::vector<std::string> missing_raw;
    std::vector<std::string> missing_enhanced;

    bool complete() const { return skipped.empty() && missing_raw.empty() && missing_enhanced.empty(); }
};

/// enhanced - raw for every class scored in both reports.
ComparisonReport compare_reports(const EvalReport& raw, const EvalReport& enhanced);

std::string comparison_table(const ComparisonReport& r, const std::vector<std::string>& class_names = {});
std::string comparison_csv(const ComparisonReport& r);
std::string comparison_json(const ComparisonReport& r);

/// Runs both arms and writes everything under config.output_dir:
/// enhanced/ (arm images + manifest), detections/<arm>/, routing.csv,
/// <arm>_eval.csv, comparison.csv, report.json, summary.txt.
ComparisonReport run_pipeline(const PipelineConfig& config);

}  // namespace tse
