#pragma once

// Traffic-sign annotation ingest, YOLO-format conversion, class grouping and
// low-quality image selection.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tse/detection.hpp"
#include "tse/image_io.hpp"
#include "tse/tensor.hpp"
#include "tse/training.hpp"

namespace tse {

class DatasetFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kNumSignClasses = 43;

struct Annotation {
    std::string filename;
    int image_w = 0;
    int image_h = 0;
    BBox box;  // pixel corners
    int class_id = 0;
};

struct RowError {
    std::size_t line = 0;
    std::string text;
    std::string message;
};

struct AnnotationSet {
    std::vector<Annotation> annotations;
    std::vector<RowError> errors;
    std::size_t clamped = 0;  // boxes pulled back inside the image
};

/// `Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId` with that header
/// line first. Throws DatasetFormatError when the header is missing; bad rows
/// are collected in errors.
AnnotationSet parse_gtsrb_csv(std::string_view text);

using ImageSizeLookup = std::function<std::optional<ImageSize>(const std::string& filename)>;
inline constexpr ImageSize kGtsdbImageSize{1360, 800};

/// `filename;x1;y1;x2;y2;classId` rows without a header. Image sizes come from
/// the lookup when it returns a value, otherwise kGtsdbImageSize.
AnnotationSet parse_gtsdb_gt(std::string_view text, const ImageSizeLookup& lookup = {});

/// `class cx cy w h`, normalized by the image size, 6 decimals.
std::string to_yolo_line(const Annotation& a);
std::string to_yolo_line(const Annotation& a, int class_id);

struct YoloBox {
    int class_id = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
};
YoloBox parse_yolo_line(std::string_view line);
BBox yolo_to_pixels(const YoloBox& y, int image_w, int image_h);

enum class BroadCategory { kProhibitory = 0, kMandatory = 1, kDanger = 2, kOther = 3 };
inline constexpr int kNumBroadCategories = 4;

/// Category membership follows the GTSDB benchmark grouping.
BroadCategory group_class(int class_id);
const char* category_name(BroadCategory c);
const char* class_name(int class_id);

/// One name per line, indexed by class id.
std::string classes_names(bool broad);

struct ConversionResult {
    std::size_t files = 0;
    std::size_t boxes = 0;
};

/// One <stem>.txt per image plus classes.names. With broad set, class ids are
/// replaced by their category index.
ConversionResult write_yolo_dataset(const std::vector<Annotation>& annotations, const std::filesystem::path& out_dir,
                                    bool broad);

struct QualityThresholds {
    double luminance = 0.25;  // mean Rec.601 luma in [0, 1]
    double blur = 50.0;       // Laplacian variance on the 8-bit scale

    void validate() const;
};

struct QualityScore {
    std::string id;
    double mean_luminance = 0.0;
    double laplacian_variance = 0.0;
    bool dark = false;
    bool blurry = false;

    bool selected() const { return dark || blurry; }
};

double mean_luminance(const Tensor& image);
/// Variance of the 4-neighbour Laplacian of 255 * luma over interior pixels;
/// 0 when the image has no interior.
double laplacian_variance(const Tensor& image);

struct NamedImage {
    std::string id;
    Tensor image;
};

/// Scores every image; an image is selected when it is dark or blurry.
std::vector<QualityScore> select_low_quality(const std::vector<NamedImage>& images, const QualityThresholds& t);
QualityScore score_quality(const std::string& id, const Tensor& image, const QualityThresholds& t);
std::string quality_csv(const std::vector<QualityScore>& scores);

}  // namespace tse

namespace tse {

/// Pairs from dir/low/<name> and dir/high/<name> (.ppm or .png), matched by
/// file name. A file present on one side only is an error.
std::vector<ImagePair> load_image_pairs(const std::filesystem::path& dir);

}  // namespace tse
