#include "tse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "tse/checkpoint.hpp"

namespace tse {

namespace {

struct PpmHeader {
    int width = 0;
    int height = 0;
    std::size_t data_offset = 0;
};

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

    void skip_space() {
        while (pos_ < bytes_.size()) {
            const char c = static_cast<char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long number(const char* what) {
        skip_space();
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000) throw ImageFormatError(std::string("PPM ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) {
            if (pos_ >= bytes_.size()) throw ImageFormatError(std::string("PPM truncated before ") + what, pos_);
            throw ImageFormatError(std::string("PPM expected ") + what, pos_);
        }
        return v;
    }

    std::size_t pos_ = 0;
    std::span<const std::uint8_t> bytes_;
};

PpmHeader parse_ppm_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2) throw ImageFormatError("PPM truncated in magic", bytes.size());
    if (bytes[0] != 'P' || bytes[1] != '6') {
        if (bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '7')
            throw UnsupportedImageError("only binary P6 PPM is supported", 0);
        throw ImageFormatError("bad PPM magic", 0);
    }
    HeaderReader r(bytes);
    r.pos_ = 2;
    if (r.pos_ < bytes.size() && !std::isspace(bytes[r.pos_]) && bytes[r.pos_] != '#')
        throw ImageFormatError("bad PPM magic", 2);
    PpmHeader h;
    const std::size_t width_at = r.pos_;
    h.width = static_cast<int>(r.number("width"));
    const std::size_t height_at = r.pos_;
    h.height = static_cast<int>(r.number("height"));
    const std::size_t maxval_at = r.pos_;
    const long maxval = r.number("maxval");
    if (h.width <= 0) throw ImageFormatError("PPM width must be positive", width_at);
    if (h.height <= 0) throw ImageFormatError("PPM height must be positive", height_at);
    if (maxval != 255) throw UnsupportedImageError("PPM maxval " + std::to_string(maxval) + " is not 255", maxval_at);
    if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_]))
        throw ImageFormatError("PPM header must end with one whitespace byte", r.pos_);
    h.data_offset = r.pos_ + 1;
    return h;
}

}  // namespace

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageSize ppm_size(std::span<const std::uint8_t> bytes) {
    const PpmHeader h = parse_ppm_header(bytes);
    return {h.width, h.height};
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    const PpmHeader h = parse_ppm_header(bytes);
    const std::size_t w = h.width, ht = h.height;
    const std::size_t need = 3 * w * ht;
    if (bytes.size() - h.data_offset < need) throw ImageFormatError("PPM pixel data truncated", bytes.size());
    if (bytes.size() - h.data_offset > need) throw ImageFormatError("PPM has trailing bytes", h.data_offset + need);
    Tensor t(Shape{1, 3, ht, w});
    const std::uint8_t* p = bytes.data() + h.data_offset;
    for (std::size_t y = 0; y < ht; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = *p++ / 255.0;
    return t;
}

namespace {

void check_rgb(const Tensor& image, const char* who) {
    const Shape& s = image.shape();
    if (s.n != 1 || s.c != 3 || s.h == 0 || s.w == 0)
        throw ShapeError(std::string(who) + ": expected (1, 3, h, w), got " + s.str());
}

std::vector<std::uint8_t> interleave(const Tensor& image) {
    const Shape& s = image.shape();
    std::vector<std::uint8_t> px(3 * s.h * s.w);
    std::size_t i = 0;
    for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
            for (std::size_t c = 0; c < 3; ++c) px[i++] = to_byte(image.at(0, c, y, x));
    return px;
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    check_rgb(image, "encode_ppm");
    const std::string header =
        "P6\n" + std::to_string(image.shape().w) + " " + std::to_string(image.shape().h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const auto px = interleave(image);
    out.insert(out.end(), px.begin(), px.end());
    return out;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw ImageFormatError(std::string("PNG: ") + img.message, 0);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ImageFormatError("PNG: " + msg, 0);
    }
    const std::size_t w = img.width, h = img.height;
    Tensor t(Shape{1, 3, h, w});
    std::size_t i = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = px[i++] / 255.0;
    return t;
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
    check_rgb(image, "encode_png");
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.shape().w);
    img.height = static_cast<png_uint_32>(image.shape().h);
    img.format = PNG_FORMAT_RGB;
    const auto px = interleave(image);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, px.data(), 0, nullptr))
        throw ImageFormatError(std::string("PNG encode: ") + img.message, 0);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, px.data(), 0, nullptr))
        throw ImageFormatError(std::string("PNG encode: ") + img.message, 0);
    out.resize(size);
    return out;
}

Tensor read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes);
    return decode_ppm(bytes);
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
    const auto ext = path.extension();
    if (ext == ".png") {
        write_file_bytes(path, encode_png(image));
    } else if (ext == ".ppm") {
        write_file_bytes(path, encode_ppm(image));
    } else {
        throw ConfigError("write_image: unsupported extension '" + ext.string() + "' (use .ppm or .png)");
    }
}

bool is_image_file(const std::filesystem::path& path) {
    const auto ext = path.extension();
    return ext == ".ppm" || ext == ".png";
}

}  // namespace tse
