#include "tse/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tse {

namespace {

constexpr std::string_view kGtsrbHeader = "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t end = s.find(sep, start);
        out.push_back(trim(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start)));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

bool parse_int(std::string_view s, int& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        fn(trim(text.substr(pos, end - pos)), line_no);
        pos = end + 1;
    }
}

// Validates and clamps a pixel box into the image; returns an error message or
// an empty string.
std::string finish_annotation(Annotation& a, std::size_t& clamped) {
    if (a.image_w <= 0 || a.image_h <= 0) return "image size must be positive";
    if (a.class_id < 0 || a.class_id >= kNumSignClasses) return "class id outside 0..42";
    BBox b = a.box;
    b.x_min = std::max(b.x_min, 0.0);
    b.y_min = std::max(b.y_min, 0.0);
    b.x_max = std::min(b.x_max, static_cast<double>(a.image_w));
    b.y_max = std::min(b.y_max, static_cast<double>(a.image_h));
    if (!b.valid()) return "box is empty inside the image";
    if (b.x_min != a.box.x_min || b.y_min != a.box.y_min || b.x_max != a.box.x_max || b.y_max != a.box.y_max) {
        ++clamped;
        a.box = b;
    }
    return {};
}

}  // namespace

AnnotationSet parse_gtsrb_csv(std::string_view text) {
    AnnotationSet set;
    bool header_seen = false;
    for_each_line(text, [&](std::string_view line, std::size_t n) {
        if (line.empty()) return;
        if (!header_seen) {
            if (line != kGtsrbHeader)
                throw DatasetFormatError("GTSRB CSV: line " + std::to_string(n) + " is not the expected header '" +
                                         std::string(kGtsrbHeader) + "'");
            header_seen = true;
            return;
        }
        const auto f = split(line, ';');
        auto fail = [&](std::string msg) { set.errors.push_back({n, std::string(line), std::move(msg)}); };
        if (f.size() != 8) return fail("expected 8 fields, got " + std::to_string(f.size()));
        int v[7];
        for (int i = 0; i < 7; ++i)
            if (!parse_int(f[i + 1], v[i])) return fail("field " + std::to_string(i + 2) + " is not an integer");
        Annotation a{std::string(f[0]), v[0], v[1], BBox{double(v[2]), double(v[3]), double(v[4]), double(v[5])}, v[6]};
        if (a.filename.empty()) return fail("empty filename");
        if (auto msg = finish_annotation(a, set.clamped); !msg.empty()) return fail(msg);
        set.annotations.push_back(std::move(a));
    });
    if (!header_seen) throw DatasetFormatError("GTSRB CSV: missing header");
    return set;
}

AnnotationSet parse_gtsdb_gt(std::string_view text, const ImageSizeLookup& lookup) {
    AnnotationSet set;
    for_each_line(text, [&](std::string_view line, std::size_t n) {
        if (line.empty()) return;
        const auto f = split(line, ';');
        auto fail = [&](std::string msg) { set.errors.push_back({n, std::string(line), std::move(msg)}); };
        if (f.size() != 6) return fail("expected 6 fields, got " + std::to_string(f.size()));
        int v[5];
        for (int i = 0; i < 5; ++i)
            if (!parse_int(f[i + 1], v[i])) return fail("field " + std::to_string(i + 2) + " is not an integer");
        Annotation a;
        a.filename = std::string(f[0]);
        if (a.filename.empty()) return fail("empty filename");
        ImageSize size = kGtsdbImageSize;
        if (lookup) {
            if (auto s = lookup(a.filename)) size = *s;
        }
        a.image_w = size.width;
        a.image_h = size.height;
        a.box = BBox{double(v[0]), double(v[1]), double(v[2]), double(v[3])};
        a.class_id = v[4];
        if (auto msg = finish_annotation(a, set.clamped); !msg.empty()) return fail(msg);
        set.annotations.push_back(std::move(a));
    });
    return set;
}

std::string to_yolo_line(const Annotation& a) { return to_yolo_line(a, a.class_id); }

std::string to_yolo_line(const Annotation& a, int class_id) {
    if (a.image_w <= 0 || a.image_h <= 0)
        throw std::invalid_argument("to_yolo_line: image size of " + a.filename + " is zero");
    const double w = a.image_w, h = a.image_h;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f", class_id, (a.box.x_min + a.box.x_max) / 2 / w,
                  (a.box.y_min + a.box.y_max) / 2 / h, (a.box.x_max - a.box.x_min) / w, (a.box.y_max - a.box.y_min) / h);
    return buf;
}

YoloBox parse_yolo_line(std::string_view line) {
    const auto gts = parse_ground_truth(line, "yolo line");
    if (gts.size() != 1) throw DatasetFormatError("parse_yolo_line: expected exactly one box");
    const BBox& b = gts[0].box;
    return YoloBox{gts[0].class_id, (b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2, b.x_max - b.x_min,
                   b.y_max - b.y_min};
}

BBox yolo_to_pixels(const YoloBox& y, int image_w, int image_h) {
    return BBox::from_center(y.cx * image_w, y.cy * image_h, y.w * image_w, y.h * image_h);
}

BroadCategory group_class(int id) {
    if (id < 0 || id >= kNumSignClasses) throw std::out_of_range("group_class: class id " + std::to_string(id));
    if (id <= 5 || (id >= 7 && id <= 10) || id == 15 || id == 16) return BroadCategory::kProhibitory;
    if (id == 11 || (id >= 18 && id <= 31)) return BroadCategory::kDanger;
    if (id >= 33 && id <= 40) return BroadCategory::kMandatory;
    return BroadCategory::kOther;
}

const char* category_name(BroadCategory c) {
    switch (c) {
        case BroadCategory::kProhibitory: return "Prohibitory";
        case BroadCategory::kMandatory: return "Mandatory";
        case BroadCategory::kDanger: return "Danger";
        case BroadCategory::kOther: return "Other";
    }
    return "?";
}

const char* class_name(int id) {
    static constexpr const char* kNames[kNumSignClasses] = {
        "Speed limit (20km/h)",
        "Speed limit (30km/h)",
        "Speed limit (50km/h)",
        "Speed limit (60km/h)",
        "Speed limit (70km/h)",
        "Speed limit (80km/h)",
        "End of speed limit (80km/h)",
        "Speed limit (100km/h)",
        "Speed limit (120km/h)",
        "No passing",
        "No passing for vehicles over 3.5 metric tons",
        "Right-of-way at the next intersection",
        "Priority road",
        "Yield",
        "Stop",
        "No vehicles",
        "Vehicles over 3.5 metric tons prohibited",
        "No entry",
        "General caution",
        "Dangerous curve to the left",
        "Dangerous curve to the right",
        "Double curve",
        "Bumpy road",
        "Slippery road",
        "Road narrows on the right",
        "Road work",
        "Traffic signals",
        "Pedestrians",
        "Children crossing",
        "Bicycles crossing",
        "Beware of ice/snow",
        "Wild animals crossing",
        "End of all speed and passing limits",
        "Turn right ahead",
        "Turn left ahead",
        "Ahead only",
        "Go straight or right",
        "Go straight or left",
        "Keep right",
        "Keep left",
        "Roundabout mandatory",
        "End of no passing",
        "End of no passing by vehicles over 3.5 metric tons",
    };
    if (id < 0 || id >= kNumSignClasses) throw std::out_of_range("class_name: class id " + std::to_string(id));
    return kNames[id];
}

std::string classes_names(bool broad) {
    std::string out;
    if (broad) {
        for (int c = 0; c < kNumBroadCategories; ++c) out += std::string(category_name(BroadCategory(c))) + "\n";
    } else {
        for (int c = 0; c < kNumSignClasses; ++c) out += std::string(class_name(c)) + "\n";
    }
    return out;
}

ConversionResult write_yolo_dataset(const std::vector<Annotation>& annotations, const std::filesystem::path& out_dir,
                                    bool broad) {
    std::map<std::string, std::string> files;
    for (const auto& a : annotations) {
        const int cls = broad ? static_cast<int>(group_class(a.class_id)) : a.class_id;
        files[std::filesystem::path(a.filename).stem().string()] += to_yolo_line(a, cls) + "\n";
    }
    std::filesystem::create_directories(out_dir);
    for (const auto& [stem, text] : files) {
        std::ofstream out(out_dir / (stem + ".txt"), std::ios::binary);
        out << text;
        if (!out) throw std::runtime_error("cannot write " + (out_dir / (stem + ".txt")).string());
    }
    std::ofstream names(out_dir / "classes.names", std::ios::binary);
    names << classes_names(broad);
    return ConversionResult{files.size(), annotations.size()};
}

void QualityThresholds::validate() const {
    if (!(luminance > 0) || !(blur > 0)) throw ConfigError("quality thresholds must be positive");
}

namespace {

std::vector<double> luma(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("expected a (1, 3, h, w) image, got " + s.str());
    std::vector<double> y(s.plane());
    for (std::size_t i = 0; i < s.plane(); ++i)
        y[i] = (299 * image[i] + 587 * image[s.plane() + i] + 114 * image[2 * s.plane() + i]) / 1000;
    return y;
}

}  // namespace

double mean_luminance(const Tensor& image) {
    const auto y = luma(image);
    double sum = 0.0;
    for (double v : y) sum += v;
    return y.empty() ? 0.0 : sum / static_cast<double>(y.size());
}

double laplacian_variance(const Tensor& image) {
    const auto y = luma(image);
    const std::size_t h = image.shape().h, w = image.shape().w;
    if (h < 3 || w < 3) return 0.0;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t r = 1; r + 1 < h; ++r)
        for (std::size_t c = 1; c + 1 < w; ++c) {
            const std::size_t i = r * w + c;
            const double lap = 255.0 * (4 * y[i] - y[i - 1] - y[i + 1] - y[i - w] - y[i + w]);
            sum += lap;
            sum_sq += lap * lap;
        }
    const double n = static_cast<double>((h - 2) * (w - 2));
    const double mean = sum / n;
    return std::max(0.0, sum_sq / n - mean * mean);
}

QualityScore score_quality(const std::string& id, const Tensor& image, const QualityThresholds& t) {
    QualityScore s;
    s.id = id;
    s.mean_luminance = mean_luminance(image);
    s.laplacian_variance = laplacian_variance(image);
    s.dark = s.mean_luminance < t.luminance;
    s.blurry = s.laplacian_variance < t.blur;
    return s;
}

std::vector<QualityScore> select_low_quality(const std::vector<NamedImage>& images, const QualityThresholds& t) {
    t.validate();
    std::vector<QualityScore> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(score_quality(im.id, im.image, t));
    return out;
}

std::string quality_csv(const std::vector<QualityScore>& scores) {
    std::ostringstream out;
    out << "image_id,mean_luminance,laplacian_variance,dark,blurry,selected\n";
    char buf[96];
    for (const auto& s : scores) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%d,%d,%d\n", s.mean_luminance, s.laplacian_variance, s.dark ? 1 : 0,
                      s.blurry ? 1 : 0, s.selected() ? 1 : 0);
        out << s.id << buf;
    }
    return out.str();
}

}  // namespace tse

namespace tse {

std::vector<ImagePair> load_image_pairs(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path low = dir / "low", high = dir / "high";
    if (!fs::is_directory(low) || !fs::is_directory(high))
        throw DatasetFormatError("pair directory " + dir.string() + " needs low/ and high/ subdirectories");
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(low))
        if (e.is_regular_file() && is_image_file(e.path())) names.push_back(e.path().filename());
    for (const auto& e : fs::directory_iterator(high))
        if (e.is_regular_file() && is_image_file(e.path()) && !fs::exists(low / e.path().filename()))
            throw DatasetFormatError("no low-quality match for " + (high / e.path().filename()).string());
    std::sort(names.begin(), names.end());
    std::vector<ImagePair> pairs;
    for (const auto& name : names) {
        if (!fs::exists(high / name)) throw DatasetFormatError("no high-quality match for " + (low / name).string());
        ImagePair p{read_image(low / name), read_image(high / name), name.stem().string()};
        p.validate();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace tse
