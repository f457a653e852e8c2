#pragma once

#include <cstddef>

#include "tse/tensor.hpp"

namespace tse {

struct Padding {
    std::size_t top = 0;
    std::size_t bottom = 0;
    std::size_t left = 0;
    std::size_t right = 0;

    bool none() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
};

/// Mirror padding without repeating the edge sample (d c b | a b c d | c b a).
/// Falls back to repeated mirroring when a pad exceeds the extent.
Tensor reflect_pad(const Tensor& x, const Padding& pad);

/// Spatial window [top, top+h) x [left, left+w) of every sample and channel.
Tensor crop_spatial(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// Padding that brings h and w up to the next multiple of `divisor`, split as
/// evenly as possible with the extra pixel going to the bottom/right.
Padding centered_padding(const Shape& s, std::size_t divisor);

}  // namespace tse
