#include "tse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tse {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_channels(std::size_t begin, std::size_t end) const {
    if (begin > end || end > shape_.c) {
        throw ShapeError("channel slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_.str());
    }
    Shape s{shape_.n, end - begin, shape_.h, shape_.w};
    Tensor out(s);
    const std::size_t plane = shape_.plane();
    for (std::size_t n = 0; n < shape_.n; ++n) {
        std::memcpy(out.data() + out.offset(n, 0, 0, 0), data() + offset(n, begin, 0, 0),
                    (end - begin) * plane * sizeof(double));
    }
    return out;
}

Tensor Tensor::sample(std::size_t index) const {
    if (index >= shape_.n) {
        throw ShapeError("sample index " + std::to_string(index) + " out of range for " + shape_.str());
    }
    Shape s{1, shape_.c, shape_.h, shape_.w};
    const std::size_t len = s.numel();
    std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(index * len),
                          data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * len));
    return Tensor(s, std::move(d));
}

Tensor stack_batch(const std::vector<Tensor>& samples) {
    if (samples.empty()) throw ShapeError("stack_batch: no samples");
    const Shape first = samples.front().shape();
    Shape s{0, first.c, first.h, first.w};
    std::vector<double> data;
    for (const auto& t : samples) {
        const Shape& ts = t.shape();
        if (ts.c != first.c || ts.h != first.h || ts.w != first.w) throw_shape_error("stack_batch", first, ts);
        s.n += ts.n;
        data.insert(data.end(), t.values().begin(), t.values().end());
    }
    return Tensor(s, std::move(data));
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape first = parts.front().shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        if (ps.n != first.n || ps.h != first.h || ps.w != first.w) throw_shape_error("concat_channels", first, ps);
        channels += ps.c;
    }
    Tensor out(Shape{first.n, channels, first.h, first.w});
    const std::size_t plane = first.plane();
    for (std::size_t n = 0; n < first.n; ++n) {
        std::size_t c0 = 0;
        for (const auto& p : parts) {
            std::memcpy(out.data() + out.offset(n, c0, 0, 0), p.data() + p.offset(n, 0, 0, 0),
                        p.shape().c * plane * sizeof(double));
            c0 += p.shape().c;
        }
    }
    return out;
}

void throw_shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw ShapeError(op + ": incompatible shapes " + a.str() + " and " + b.str());
}

}  // namespace tse
