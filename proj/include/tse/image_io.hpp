#pragma once

// Image decode/encode. Decoded images are (1, 3, h, w) tensors in [0, 1].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/tensor.hpp"

namespace tse {

class ImageFormatError : public std::runtime_error {
public:
    ImageFormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// A well-formed file using a variant we do not read (for example maxval != 255).
class UnsupportedImageError : public ImageFormatError {
public:
    using ImageFormatError::ImageFormatError;
};

struct ImageSize {
    int width = 0;
    int height = 0;
};

/// Binary P6 with maxval 255. Comments are accepted in the header.
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
ImageSize ppm_size(std::span<const std::uint8_t> bytes);
/// Writes the canonical header "P6\n<w> <h>\n255\n".
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

Tensor decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Tensor& image);

/// Round-to-nearest 8-bit code for a value clamped to [0, 1].
std::uint8_t to_byte(double v);

/// Dispatch on the file signature, not the extension.
Tensor read_image(const std::filesystem::path& path);
/// Format chosen by extension: .ppm or .png.
void write_image(const std::filesystem::path& path, const Tensor& image);
bool is_image_file(const std::filesystem::path& path);

}  // namespace tse
