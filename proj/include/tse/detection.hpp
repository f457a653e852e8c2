#pragma once

// Detection scoring: IoU matching, per-class average precision and summary rates.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tse {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool valid() const { return x_min < x_max && y_min < y_max; }
    double area() const { return (x_max - x_min) * (y_max - y_min); }
    /// Corner box from a center/size description.
    static BBox from_center(double cx, double cy, double w, double h);
};

struct Detection {
    std::string image_id;
    int class_id = 0;
    double confidence = 0.0;
    BBox box;
};

struct GroundTruth {
    std::string image_id;
    int class_id = 0;
    BBox box;
};

double iou(const BBox& a, const BBox& b);

struct MatchLabel {
    std::size_t detection = 0;  // index into the input detections
    bool true_positive = false;
    std::optional<std::size_t> ground_truth;
    double iou = 0.0;
};

/// Labels in descending confidence order (ties keep input order). Each
/// detection takes the unmatched same-image ground truth with the highest IoU,
/// provided it reaches iou_thresh. Class ids are not consulted.
std::vector<MatchLabel> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                         double iou_thresh);

/// All-points area under the precision envelope. Tied confidences form one
/// operating point. Throws std::invalid_argument when gts is empty.
double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         double iou_thresh);

double f1_score(double precision, double recall);

struct ClassStats {
    std::optional<double> ap;  // absent when the class has no ground truth
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t ground_truth = 0;
};

struct EvalReport {
    std::map<int, ClassStats> per_class;
    double map = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double avg_iou = 0.0;
    double iou_thresh = 0.5;
    double conf_thresh = 0.25;
};

/// Unweighted mean over classes that have an AP.
double mean_average_precision(const std::map<int, ClassStats>& per_class);

/// AP uses every detection; TP/FP/FN and the summary rates use detections with
/// confidence >= conf_thresh. Throws EvalError when there is no ground truth.
EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                    double iou_thresh = 0.5, double conf_thresh = 0.25);

// Per-image text files with normalized center/size boxes:
//   detections:   class_id confidence cx cy w h
//   ground truth: class_id cx cy w h
std::vector<Detection> parse_detections(std::string_view text, const std::string& image_id);
std::vector<GroundTruth> parse_ground_truth(std::string_view text, const std::string& image_id);
std::string format_detections(const std::vector<Detection>& dets);

/// Every *.txt in dir keyed by file stem.
std::map<std::string, std::vector<GroundTruth>> load_ground_truth_dir(const std::filesystem::path& dir);

struct DetectionSet {
    std::vector<Detection> detections;
    std::vector<std::string> missing;  // image ids with no detections file
};

/// Reads dir/<id>.txt for every id; absent files are listed, not fatal.
DetectionSet load_detections_for(const std::filesystem::path& dir, const std::vector<std::string>& image_ids);

/// Class, AP, TP, FP, FN table followed by the summary rates.
std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names = {});
std::string report_csv(const EvalReport& report, const std::vector<std::string>& class_names = {});
std::string report_json(const EvalReport& report, const std::vector<std::string>& class_names = {});

std::vector<std::string> read_class_names(const std::filesystem::path& path);

}  // namespace tse
