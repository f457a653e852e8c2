#include "tse/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tse {

BBox BBox::from_center(double cx, double cy, double w, double h) {
    return BBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

namespace {

std::vector<std::size_t> confidence_order(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
    return order;
}

}  // namespace

std::vector<MatchLabel> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                         double iou_thresh) {
    std::vector<bool> taken(gts.size(), false);
    std::vector<MatchLabel> labels;
    labels.reserve(dets.size());
    for (std::size_t d : confidence_order(dets)) {
        MatchLabel label{d, false, std::nullopt, 0.0};
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].image_id != dets[d].image_id) continue;
            const double o = iou(dets[d].box, gts[g].box);
            if (o > best) {
                best = o;
                best_g = g;
            }
        }
        if (best >= iou_thresh) {
            taken[best_g] = true;
            label.true_positive = true;
            label.ground_truth = best_g;
            label.iou = best;
        }
        labels.push_back(label);
    }
    return labels;
}

double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         double iou_thresh) {
    if (gts.empty()) throw std::invalid_argument("average_precision: no ground truth for the class");
    const auto labels = match_detections(dets, gts, iou_thresh);
    std::vector<double> recall, precision;
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i].true_positive ? tp : fp) += 1;
        const bool group_end =
            i + 1 == labels.size() || dets[labels[i + 1].detection].confidence != dets[labels[i].detection].confidence;
        if (!group_end) continue;
        recall.push_back(tp / static_cast<double>(gts.size()));
        precision.push_back(tp / (tp + fp));
    }
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0 ? 2 * precision * recall / s : 0.0;
}

double mean_average_precision(const std::map<int, ClassStats>& per_class) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [cls, stats] : per_class) {
        if (!stats.ap) continue;
        sum += *stats.ap;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_thresh,
                    double conf_thresh) {
    if (gts.empty()) throw EvalError("evaluate: ground truth is empty");
    if (!(iou_thresh > 0 && iou_thresh < 1)) throw EvalError("evaluate: iou threshold must lie in (0, 1)");
    EvalReport report;
    report.iou_thresh = iou_thresh;
    report.conf_thresh = conf_thresh;

    std::set<int> classes;
    for (const auto& d : dets) classes.insert(d.class_id);
    for (const auto& g : gts) classes.insert(g.class_id);

    std::size_t tp_total = 0, fp_total = 0;
    double iou_sum = 0.0;
    for (int cls : classes) {
        std::vector<Detection> cd, cd_conf;
        std::vector<GroundTruth> cg;
        for (const auto& d : dets) {
            if (d.class_id != cls) continue;
            cd.push_back(d);
            if (d.confidence >= conf_thresh) cd_conf.push_back(d);
        }
        for (const auto& g : gts)
            if (g.class_id == cls) cg.push_back(g);

        ClassStats stats;
        stats.ground_truth = cg.size();
        if (!cg.empty()) stats.ap = average_precision(cd, cg, iou_thresh);
        for (const auto& label : match_detections(cd_conf, cg, iou_thresh)) {
            if (label.true_positive) {
                ++stats.tp;
                iou_sum += label.iou;
            } else {
                ++stats.fp;
            }
        }
        stats.fn = cg.size() - stats.tp;
        tp_total += stats.tp;
        fp_total += stats.fp;
        report.per_class[cls] = stats;
    }
    report.map = mean_average_precision(report.per_class);
    const double tp = static_cast<double>(tp_total);
    report.precision = tp_total + fp_total ? tp / static_cast<double>(tp_total + fp_total) : 0.0;
    report.recall = tp / static_cast<double>(gts.size());
    report.f1 = f1_score(report.precision, report.recall);
    report.avg_iou = tp_total ? iou_sum / tp : 0.0;
    return report;
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) fn(line, line_no);
        pos = end + 1;
    }
}

std::vector<double> parse_numbers(const std::string& line, std::size_t expected, const std::string& where,
                                  std::size_t line_no) {
    std::istringstream in(line);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v))
            throw EvalError(where + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
        out.push_back(v);
    }
    if (out.size() != expected)
        throw EvalError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                        " fields, got " + std::to_string(out.size()));
    return out;
}

int class_field(double v, const std::string& where, std::size_t line_no) {
    if (v < 0 || v != std::floor(v) || v > 1e6)
        throw EvalError(where + ":" + std::to_string(line_no) + ": class id must be a non-negative integer");
    return static_cast<int>(v);
}

BBox box_fields(double cx, double cy, double w, double h, const std::string& where, std::size_t line_no) {
    const BBox b = BBox::from_center(cx, cy, w, h);
    if (!b.valid()) throw EvalError(where + ":" + std::to_string(line_no) + ": box has no area");
    return b;
}

}  // namespace

std::vector<Detection> parse_detections(std::string_view text, const std::string& image_id) {
    std::vector<Detection> out;
    for_each_line(text, [&](const std::string& line, std::size_t n) {
        const auto f = parse_numbers(line, 6, image_id, n);
        if (f[1] < 0 || f[1] > 1)
            throw EvalError(image_id + ":" + std::to_string(n) + ": confidence outside [0, 1]");
        out.push_back(Detection{image_id, class_field(f[0], image_id, n), f[1], box_fields(f[2], f[3], f[4], f[5], image_id, n)});
    });
    return out;
}

std::vector<GroundTruth> parse_ground_truth(std::string_view text, const std::string& image_id) {
    std::vector<GroundTruth> out;
    for_each_line(text, [&](const std::string& line, std::size_t n) {
        const auto f = parse_numbers(line, 5, image_id, n);
        out.push_back(GroundTruth{image_id, class_field(f[0], image_id, n), box_fields(f[1], f[2], f[3], f[4], image_id, n)});
    });
    return out;
}

std::string format_detections(const std::vector<Detection>& dets) {
    std::string out;
    char buf[160];
    for (const auto& d : dets) {
        const BBox& b = d.box;
        std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f %.6f\n", d.class_id, d.confidence,
                      (b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2, b.x_max - b.x_min, b.y_max - b.y_min);
        out += buf;
    }
    return out;
}

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw EvalError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::map<std::string, std::vector<GroundTruth>> load_ground_truth_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw EvalError("not a directory: " + dir.string());
    std::map<std::string, std::vector<GroundTruth>> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const std::string id = entry.path().stem().string();
        out[id] = parse_ground_truth(slurp(entry.path()), id);
    }
    return out;
}

DetectionSet load_detections_for(const std::filesystem::path& dir, const std::vector<std::string>& image_ids) {
    DetectionSet set;
    for (const auto& id : image_ids) {
        const auto path = dir / (id + ".txt");
        if (!std::filesystem::is_regular_file(path)) {
            set.missing.push_back(id);
            continue;
        }
        auto dets = parse_detections(slurp(path), id);
        set.detections.insert(set.detections.end(), dets.begin(), dets.end());
    }
    return set;
}

namespace {

std::string class_label(int cls, const std::vector<std::string>& names) {
    if (cls >= 0 && static_cast<std::size_t>(cls) < names.size()) return names[cls];
    return std::to_string(cls);
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names) {
    std::size_t width = 5;
    for (const auto& [cls, stats] : report.per_class) width = std::max(width, class_label(cls, class_names).size());
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %8s %6s %6s %6s\n", static_cast<int>(width), "Class", "AP(%)", "TP", "FP", "FN");
    out << buf;
    for (const auto& [cls, stats] : report.per_class) {
        const std::string ap = stats.ap ? fmt("%.2f", *stats.ap * 100) : "-";
        std::snprintf(buf, sizeof buf, "%-*s %8s %6zu %6zu %6zu\n", static_cast<int>(width),
                      class_label(cls, class_names).c_str(), ap.c_str(), stats.tp, stats.fp, stats.fn);
        out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "mAP@%.2f = %.2f%%  precision = %.4f  recall = %.4f  F1 = %.4f  avg IoU = %.2f%%  (conf >= %.2f)\n",
                  report.iou_thresh, report.map * 100, report.precision, report.recall, report.f1,
                  report.avg_iou * 100, report.conf_thresh);
    out << buf;
    return out.str();
}

std::string report_csv(const EvalReport& report, const std::vector<std::string>& class_names) {
    std::ostringstream out;
    out << "class_id,class_name,ap,tp,fp,fn,ground_truth\n";
    for (const auto& [cls, stats] : report.per_class) {
        out << cls << ',' << csv_field(class_label(cls, class_names)) << ','
            << (stats.ap ? fmt("%.10g", *stats.ap) : std::string()) << ',' << stats.tp << ',' << stats.fp << ','
            << stats.fn << ',' << stats.ground_truth << '\n';
    }
    return out.str();
}

std::string report_json(const EvalReport& report, const std::vector<std::string>& class_names) {
    nlohmann::ordered_json j;
    j["iou_thresh"] = report.iou_thresh;
    j["conf_thresh"] = report.conf_thresh;
    j["map"] = report.map;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["avg_iou"] = report.avg_iou;
    auto& classes = j["classes"] = nlohmann::ordered_json::array();
    for (const auto& [cls, stats] : report.per_class) {
        nlohmann::ordered_json c;
        c["class_id"] = cls;
        c["name"] = class_label(cls, class_names);
        c["ap"] = stats.ap ? nlohmann::ordered_json(*stats.ap) : nlohmann::ordered_json(nullptr);
        c["tp"] = stats.tp;
        c["fp"] = stats.fp;
        c["fn"] = stats.fn;
        c["ground_truth"] = stats.ground_truth;
        classes.push_back(c);
    }
    return j.dump(2) + "\n";
}

std::vector<std::string> read_class_names(const std::filesystem::path& path) {
    std::vector<std::string> names;
    std::istringstream in(slurp(path));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

}  // namespace tse
