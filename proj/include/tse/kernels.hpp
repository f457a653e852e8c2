#pragma once

// Compute kernels behind the autodiff ops. Every kernel in tse::kernels is
// OpenMP-parallel over independent output slices, so results do not depend on
// the thread count. tse::kernels::reference holds the plain serial loops the
// parallel versions are tested and benchmarked against.

#include <cstdint>
#include <vector>

#include "tse/tensor.hpp"

namespace tse::kernels {

/// Convolution geometry. Weights are (outC, inC, kH, kW); bias is (outC, 1, 1, 1).
struct ConvGeometry {
    int stride = 1;
    int padding = 0;
};

Shape conv2d_output_shape(const Shape& x, const Shape& w, ConvGeometry g);
void check_conv2d_args(const Shape& x, const Shape& w, const Shape& b, ConvGeometry g);

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape, ConvGeometry g);
/// Accumulates into grad_w and grad_b (which must already have the weight and bias shapes).
void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, ConvGeometry g, Tensor& grad_w, Tensor& grad_b);

/// Median over channels at each (n, h, w). lower/upper hold the channel picked
/// for the two middle order statistics (equal for odd c). Among tied values the
/// lowest channel index is picked.
struct MedianResult {
    Tensor value;
    std::vector<std::uint32_t> lower;
    std::vector<std::uint32_t> upper;
};
MedianResult median_channels(const Tensor& x);

/// Rational resize factor; only 1/4, 1/2, 2 and 4 are accepted.
struct ResizeRatio {
    int num = 1;
    int den = 1;
};
void validate_ratio(ResizeRatio r);
Shape resized_shape(const Shape& x, ResizeRatio r);

/// Bilinear resize with half-pixel centers and edge clamping (no antialiasing).
Tensor resize_bilinear(const Tensor& x, ResizeRatio r);
Tensor resize_bilinear_grad(const Tensor& grad_out, const Shape& in_shape, ResizeRatio r);

namespace reference {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape, ConvGeometry g);
void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, ConvGeometry g, Tensor& grad_w, Tensor& grad_b);
MedianResult median_channels(const Tensor& x);
Tensor resize_bilinear(const Tensor& x, ResizeRatio r);
Tensor resize_bilinear_grad(const Tensor& grad_out, const Shape& in_shape, ResizeRatio r);

}  // namespace reference

/// Threads the parallel kernels will use (1 when built without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace tse::kernels
