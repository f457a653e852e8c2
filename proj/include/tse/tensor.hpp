#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tse {

/// Raised when operand dimensions are incompatible.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for unsupported parameters (bad scale factor, bad config values).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dimensions of a 4-D tensor in (batch, channel, height, width) order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense row-major (n, c, h, w) tensor of doubles. Plain value type.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(shape, v); }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() & { return data_; }
    const std::vector<double>& values() const& { return data_; }
    std::vector<double> values() && { return std::move(data_); }

    std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[offset(n, c, h, w)];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[offset(n, c, h, w)];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool all_finite() const;

    /// Channels [begin, end) of every sample.
    Tensor slice_channels(std::size_t begin, std::size_t end) const;
    /// Sample [index] as a (1, c, h, w) tensor.
    Tensor sample(std::size_t index) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stack (1, c, h, w) tensors along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& samples);

/// Concatenate along the channel axis; all inputs share n, h, w.
Tensor concat_channels(const std::vector<Tensor>& parts);

[[noreturn]] void throw_shape_error(const std::string& op, const Shape& a, const Shape& b);

}  // namespace tse
