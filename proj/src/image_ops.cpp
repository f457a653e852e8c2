#include "tse/image_ops.hpp"

#include <cstring>

namespace tse {

namespace {

std::size_t mirror(std::ptrdiff_t i, std::size_t extent) {
    if (extent == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (extent - 1));
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(extent) ? i : period - i);
}

}  // namespace

Tensor reflect_pad(const Tensor& x, const Padding& pad) {
    if (pad.none()) return x;
    const Shape xs = x.shape();
    const Shape os{xs.n, xs.c, xs.h + pad.top + pad.bottom, xs.w + pad.left + pad.right};
    Tensor out(os);
    for (std::size_t p = 0; p < xs.n * xs.c; ++p) {
        const double* src = x.data() + p * xs.plane();
        double* dst = out.data() + p * os.plane();
        for (std::size_t y = 0; y < os.h; ++y) {
            const std::size_t sy = mirror(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad.top), xs.h);
            for (std::size_t xx = 0; xx < os.w; ++xx) {
                const std::size_t sx =
                    mirror(static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(pad.left), xs.w);
                dst[y * os.w + xx] = src[sy * xs.w + sx];
            }
        }
    }
    return out;
}

Tensor crop_spatial(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    const Shape xs = x.shape();
    if (top + h > xs.h || left + w > xs.w) {
        throw ShapeError("crop window " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(top) +
                         "," + std::to_string(left) + ") exceeds " + xs.str());
    }
    Tensor out(Shape{xs.n, xs.c, h, w});
    for (std::size_t p = 0; p < xs.n * xs.c; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            std::memcpy(out.data() + p * h * w + y * w, x.data() + p * xs.plane() + (top + y) * xs.w + left,
                        w * sizeof(double));
        }
    }
    return out;
}

Padding centered_padding(const Shape& s, std::size_t divisor) {
    const std::size_t ph = (divisor - s.h % divisor) % divisor;
    const std::size_t pw = (divisor - s.w % divisor) % divisor;
    return Padding{ph / 2, ph - ph / 2, pw / 2, pw - pw / 2};
}

}  // namespace tse
