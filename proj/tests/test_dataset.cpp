#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "tse/checkpoint.hpp"
#include "tse/dataset.hpp"
#include "tse/image_io.hpp"

namespace tse {
namespace {

std::string fixture(const std::string& name) {
    std::ifstream in(std::filesystem::path(TSE_FIXTURE_DIR) / name, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr const char* kHeader = "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId\n";

TEST(Gtsrb, ParsesDocumentedRow) {
    const auto set = parse_gtsrb_csv(std::string(kHeader) + "00000.ppm;29;30;5;6;24;25;0\n");
    ASSERT_EQ(set.annotations.size(), 1u);
    const Annotation& a = set.annotations[0];
    EXPECT_EQ(a.filename, "00000.ppm");
    EXPECT_EQ(a.image_w, 29);
    EXPECT_EQ(a.image_h, 30);
    EXPECT_EQ(a.box.x_min, 5);
    EXPECT_EQ(a.box.y_min, 6);
    EXPECT_EQ(a.box.x_max, 24);
    EXPECT_EQ(a.box.y_max, 25);
    EXPECT_EQ(a.class_id, 0);
    EXPECT_TRUE(set.errors.empty());
}

TEST(Gtsrb, HeaderAndRowErrors) {
    EXPECT_TRUE(parse_gtsrb_csv(kHeader).annotations.empty());
    EXPECT_THROW(parse_gtsrb_csv("00000.ppm;29;30;5;6;24;25;0\n"), DatasetFormatError);
    EXPECT_THROW(parse_gtsrb_csv(""), DatasetFormatError);
    const auto set = parse_gtsrb_csv(std::string(kHeader) +
                                     "a.ppm;29;30;5;6;24;25\n"
                                     "b.ppm;29;30;5;6;24;25;1\n"
                                     "c.ppm;29;30;5;x;24;25;1\n"
                                     "d.ppm;29;30;5;6;24;25;43\n"
                                     "e.ppm;29;30;30;6;40;25;1\n");
    ASSERT_EQ(set.annotations.size(), 1u);
    EXPECT_EQ(set.annotations[0].filename, "b.ppm");
    ASSERT_EQ(set.errors.size(), 4u);
    EXPECT_EQ(set.errors[0].line, 2u);
    EXPECT_NE(set.errors[0].message.find("8 fields"), std::string::npos);
}

TEST(Gtsrb, ClampsAndCounts) {
    const auto set = parse_gtsrb_csv(std::string(kHeader) + "a.ppm;20;20;-2;3;25;10;1\n");
    ASSERT_EQ(set.annotations.size(), 1u);
    EXPECT_EQ(set.clamped, 1u);
    EXPECT_EQ(set.annotations[0].box.x_min, 0);
    EXPECT_EQ(set.annotations[0].box.x_max, 20);
}

TEST(Gtsdb, ParsesWithDefaultAndLookupSizes) {
    const auto set = parse_gtsdb_gt(fixture("gtsdb_gt.txt"));
    ASSERT_EQ(set.annotations.size(), 7u);
    EXPECT_TRUE(set.errors.empty());
    EXPECT_EQ(set.annotations[0].image_w, 1360);
    EXPECT_EQ(set.annotations[0].image_h, 800);
    EXPECT_EQ(set.annotations[0].class_id, 11);
    const auto small = parse_gtsdb_gt("x.ppm;10;10;50;50;3\n", [](const std::string&) {
        return std::optional<ImageSize>(ImageSize{40, 30});
    });
    EXPECT_EQ(small.clamped, 1u);
    EXPECT_EQ(small.annotations[0].box.x_max, 40);
    EXPECT_EQ(small.annotations[0].box.y_max, 30);
}

TEST(Yolo, NormalizationArithmetic) {
    const Annotation a{"i.ppm", 100, 100, BBox{10, 20, 30, 60}, 2};
    EXPECT_EQ(to_yolo_line(a), "2 0.200000 0.400000 0.200000 0.400000");
    const Annotation full{"f.ppm", 64, 48, BBox{0, 0, 64, 48}, 7};
    EXPECT_EQ(to_yolo_line(full), "7 0.500000 0.500000 1.000000 1.000000");
    EXPECT_THROW(to_yolo_line(Annotation{"z.ppm", 0, 10, BBox{0, 0, 1, 1}, 0}), std::invalid_argument);
}

void expect_round_trip(const AnnotationSet& set) {
    ASSERT_FALSE(set.annotations.empty());
    for (const auto& a : set.annotations) {
        const YoloBox y = parse_yolo_line(to_yolo_line(a));
        EXPECT_EQ(y.class_id, a.class_id);
        const BBox b = yolo_to_pixels(y, a.image_w, a.image_h);
        EXPECT_LE(std::abs(b.x_min - a.box.x_min), 0.5) << a.filename;
        EXPECT_LE(std::abs(b.y_min - a.box.y_min), 0.5) << a.filename;
        EXPECT_LE(std::abs(b.x_max - a.box.x_max), 0.5) << a.filename;
        EXPECT_LE(std::abs(b.y_max - a.box.y_max), 0.5) << a.filename;
    }
}

TEST(Yolo, FixturesRoundTrip) {
    expect_round_trip(parse_gtsrb_csv(fixture("gtsrb_sample.csv")));
    expect_round_trip(parse_gtsdb_gt(fixture("gtsdb_gt.txt")));
}

TEST(Yolo, RandomRoundTripWithinHalfPixel) {
    Rng rng(12);
    for (int i = 0; i < 2000; ++i) {
        const int w = 1 + static_cast<int>(rng.below(4000)), h = 1 + static_cast<int>(rng.below(4000));
        double x0 = rng.uniform(0, w), x1 = rng.uniform(0, w), y0 = rng.uniform(0, h), y1 = rng.uniform(0, h);
        if (x0 == x1 || y0 == y1) continue;
        const Annotation a{"r", w, h, BBox{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)},
                           static_cast<int>(rng.below(43))};
        const BBox b = yolo_to_pixels(parse_yolo_line(to_yolo_line(a)), w, h);
        EXPECT_LE(std::abs(b.x_min - a.box.x_min), 0.5);
        EXPECT_LE(std::abs(b.y_max - a.box.y_max), 0.5);
    }
}

TEST(Categories, PartitionWithDocumentedSizes) {
    std::map<BroadCategory, int> sizes;
    for (int c = 0; c < kNumSignClasses; ++c) ++sizes[group_class(c)];
    EXPECT_EQ(sizes[BroadCategory::kProhibitory], 12);
    EXPECT_EQ(sizes[BroadCategory::kDanger], 15);
    EXPECT_EQ(sizes[BroadCategory::kMandatory], 8);
    EXPECT_EQ(sizes[BroadCategory::kOther], 8);
    EXPECT_EQ(group_class(2), BroadCategory::kProhibitory);
    EXPECT_EQ(group_class(11), BroadCategory::kDanger);
    EXPECT_EQ(group_class(38), BroadCategory::kMandatory);
    EXPECT_EQ(group_class(14), BroadCategory::kOther);
    EXPECT_THROW(group_class(-1), std::out_of_range);
    EXPECT_THROW(group_class(43), std::out_of_range);
}

TEST(Convert, WritesOneFilePerImage) {
    const auto dir = std::filesystem::temp_directory_path() / "tse_test_convert";
    std::filesystem::remove_all(dir);
    const auto set = parse_gtsdb_gt(fixture("gtsdb_gt.txt"));
    const auto res = write_yolo_dataset(set.annotations, dir, true);
    EXPECT_EQ(res.files, 6u);
    EXPECT_EQ(res.boxes, 7u);
    std::ifstream in(dir / "00001.txt");
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    EXPECT_EQ(l1.substr(0, 2), "1 ");  // class 40 is Mandatory
    EXPECT_EQ(l2.substr(0, 2), "1 ");
    std::ifstream names(dir / "classes.names");
    std::string first;
    std::getline(names, first);
    EXPECT_EQ(first, "Prohibitory");
    EXPECT_EQ(classes_names(false).substr(0, 20), "Speed limit (20km/h)");
}

TEST(Ppm, SinglePixelDecode) {
    const std::vector<std::uint8_t> bytes{'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255, 0, 0};
    const Tensor t = decode_ppm(bytes);
    EXPECT_EQ(t.shape(), (Shape{1, 3, 1, 1}));
    EXPECT_EQ(t[0], 1.0);
    EXPECT_EQ(t[1], 0.0);
    EXPECT_EQ(t[2], 0.0);
    EXPECT_EQ(encode_ppm(t), bytes);
}

TEST(Ppm, RandomRoundTripIsByteExact) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
        const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
        std::vector<std::uint8_t> bytes(header.begin(), header.end());
        for (int i = 0; i < 3 * w * h; ++i) bytes.push_back(static_cast<std::uint8_t>(rng.below(256)));
        EXPECT_EQ(encode_ppm(decode_ppm(bytes)), bytes);
    }
}

TEST(Ppm, CommentsAcceptedAndWhiteIsExactlyOne) {
    const std::string text = "P6 # comment\n2 1\n# another\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    for (int i = 0; i < 6; ++i) bytes.push_back(255);
    const Tensor t = decode_ppm(bytes);
    EXPECT_EQ(mean_luminance(t), 1.0);
}

TEST(Ppm, ErrorsCarryOffsets) {
    auto bytes_of = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    try {
        decode_ppm(bytes_of("Q6\n1 1\n255\n123"));
        FAIL();
    } catch (const ImageFormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    try {
        decode_ppm(bytes_of("P6\n2 2\n255\n123"));
        FAIL();
    } catch (const ImageFormatError& e) {
        EXPECT_EQ(e.offset(), 14u);
    }
    EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n65535\n123456")), UnsupportedImageError);
    EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3")), UnsupportedImageError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n1")), ImageFormatError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n255\n1234")), ImageFormatError);
}

TEST(Png, RoundTripThroughLibpng) {
    Rng rng(4);
    Tensor t(Shape{1, 3, 7, 5});
    for (double& v : t.values()) v = static_cast<double>(rng.below(256)) / 255.0;
    const Tensor back = decode_png(encode_png(t));
    EXPECT_EQ(back, t);
    const auto dir = std::filesystem::temp_directory_path() / "tse_test_png";
    std::filesystem::create_directories(dir);
    write_image(dir / "x.png", t);
    write_image(dir / "x.ppm", t);
    EXPECT_EQ(read_image(dir / "x.png"), t);
    EXPECT_EQ(read_image(dir / "x.ppm"), t);
    EXPECT_THROW(decode_png(std::vector<std::uint8_t>{1, 2, 3}), ImageFormatError);
}

TEST(Quality, DocumentedCases) {
    const QualityThresholds defaults;
    const Tensor black(Shape{1, 3, 16, 16}, 0.0);
    for (double lum : {1e-6, 0.01, 0.25}) EXPECT_TRUE(score_quality("b", black, QualityThresholds{lum, 1.0}).dark);
    const Tensor gray(Shape{1, 3, 16, 16}, 0.5);
    const QualityScore g = score_quality("g", gray, defaults);
    EXPECT_EQ(g.laplacian_variance, 0.0);
    EXPECT_TRUE(g.blurry);
    EXPECT_FALSE(g.dark);
    Tensor board(Shape{1, 3, 16, 16});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) board.at(0, c, y, x) = (x + y) % 2 ? 1.0 : 0.0;
    const QualityScore b = score_quality("board", board, defaults);
    EXPECT_DOUBLE_EQ(b.mean_luminance, 0.5);
    EXPECT_NEAR(b.laplacian_variance, std::pow(4 * 255.0, 2), 1e-6);
    EXPECT_FALSE(b.selected());
}

TEST(Quality, LaplacianMatchesDirectComputation) {
    Rng rng(7);
    const Tensor img = testing::random_tensor({1, 3, 6, 9}, rng, 0, 1);
    std::vector<double> lap;
    auto y = [&](int r, int c) {
        return 255.0 * (0.299 * img.at(0, 0, r, c) + 0.587 * img.at(0, 1, r, c) + 0.114 * img.at(0, 2, r, c));
    };
    for (int r = 1; r < 5; ++r)
        for (int c = 1; c < 8; ++c) lap.push_back(y(r - 1, c) + y(r + 1, c) + y(r, c - 1) + y(r, c + 1) - 4 * y(r, c));
    double mean = 0, var = 0;
    for (double v : lap) mean += v / lap.size();
    for (double v : lap) var += (v - mean) * (v - mean) / lap.size();
    EXPECT_NEAR(laplacian_variance(img), var, 1e-8 * var);
}

TEST(Quality, PureAndValidated) {
    Rng rng(8);
    std::vector<NamedImage> images;
    for (int i = 0; i < 5; ++i) images.push_back({std::to_string(i), testing::random_tensor({1, 3, 8, 8}, rng, 0, 0.4 * i)});
    const auto a = select_low_quality(images, {});
    const auto b = select_low_quality(images, {});
    EXPECT_EQ(quality_csv(a), quality_csv(b));
    EXPECT_THROW(select_low_quality(images, QualityThresholds{0.0, 50}), ConfigError);
}

}  // namespace
}  // namespace tse
