#include "tse/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tse::kernels {

namespace {

// Output index range [lo, hi) for which in = out * stride + offset stays inside [0, extent).
std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t out_extent, std::int64_t in_extent,
                                                  std::int64_t stride, std::int64_t offset) {
    std::int64_t lo = 0;
    if (offset < 0) lo = (-offset + stride - 1) / stride;
    std::int64_t hi = 0;
    if (in_extent - 1 - offset >= 0) hi = (in_extent - 1 - offset) / stride + 1;
    hi = std::min(hi, out_extent);
    return {lo, std::max(lo, hi)};
}

struct AxisTaps {
    std::vector<std::int64_t> i0;
    std::vector<std::int64_t> i1;
    std::vector<double> frac;
};

AxisTaps axis_taps(std::size_t in, std::size_t out) {
    AxisTaps t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.frac.resize(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double max_src = static_cast<double>(in - 1);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, max_src);
        const auto lo = static_cast<std::int64_t>(src);
        t.i0[o] = lo;
        t.i1[o] = std::min<std::int64_t>(lo + 1, static_cast<std::int64_t>(in) - 1);
        t.frac[o] = src - static_cast<double>(lo);
    }
    return t;
}

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Shape& w, ConvGeometry g) {
    const auto span_h = static_cast<std::int64_t>(x.h) + 2 * g.padding - static_cast<std::int64_t>(w.h);
    const auto span_w = static_cast<std::int64_t>(x.w) + 2 * g.padding - static_cast<std::int64_t>(w.w);
    if (span_h < 0 || span_w < 0) throw_shape_error("conv2d (kernel larger than padded input)", x, w);
    return Shape{x.n, w.n, static_cast<std::size_t>(span_h / g.stride + 1),
                 static_cast<std::size_t>(span_w / g.stride + 1)};
}

void check_conv2d_args(const Shape& x, const Shape& w, const Shape& b, ConvGeometry g) {
    if (g.stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(g.stride));
    if (g.padding < 0) throw ConfigError("conv2d: padding must be >= 0, got " + std::to_string(g.padding));
    if (x.c != w.c) throw_shape_error("conv2d input vs weight (channel mismatch)", x, w);
    if (b.numel() != w.n) throw_shape_error("conv2d weight vs bias", w, b);
    conv2d_output_shape(x, w, g);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
    check_conv2d_args(x.shape(), w.shape(), b.shape(), g);
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const Shape os = conv2d_output_shape(xs, ws, g);
    Tensor out(os);
    const auto planes = static_cast<std::int64_t>(os.n * os.c);
    const std::int64_t s = g.stride;

#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::size_t n = static_cast<std::size_t>(p) / os.c;
        const std::size_t oc = static_cast<std::size_t>(p) % os.c;
        double* dst = out.data() + out.offset(n, oc, 0, 0);
        std::fill(dst, dst + os.plane(), b[oc]);
        for (std::size_t ic = 0; ic < xs.c; ++ic) {
            const double* src = x.data() + x.offset(n, ic, 0, 0);
            for (std::size_t kh = 0; kh < ws.h; ++kh) {
                const auto [oh_lo, oh_hi] = valid_range(static_cast<std::int64_t>(os.h),
                                                        static_cast<std::int64_t>(xs.h), s,
                                                        static_cast<std::int64_t>(kh) - g.padding);
                for (std::size_t kw = 0; kw < ws.w; ++kw) {
                    const double wv = w.at(oc, ic, kh, kw);
                    const std::int64_t off_w = static_cast<std::int64_t>(kw) - g.padding;
                    const auto [ow_lo, ow_hi] = valid_range(static_cast<std::int64_t>(os.w),
                                                            static_cast<std::int64_t>(xs.w), s, off_w);
                    for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                        const std::int64_t ih = oh * s + static_cast<std::int64_t>(kh) - g.padding;
                        const double* row = src + ih * static_cast<std::int64_t>(xs.w);
                        double* orow = dst + oh * static_cast<std::int64_t>(os.w);
                        for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                            orow[ow] += wv * row[ow * s + off_w];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& xs, ConvGeometry g) {
    const Shape ws = w.shape();
    const Shape os = grad_out.shape();
    Tensor gx(xs);
    const auto planes = static_cast<std::int64_t>(xs.n * xs.c);
    const std::int64_t s = g.stride;

#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::size_t n = static_cast<std::size_t>(p) / xs.c;
        const std::size_t ic = static_cast<std::size_t>(p) % xs.c;
        double* dst = gx.data() + gx.offset(n, ic, 0, 0);
        for (std::size_t oc = 0; oc < os.c; ++oc) {
            const double* gsrc = grad_out.data() + grad_out.offset(n, oc, 0, 0);
            for (std::size_t kh = 0; kh < ws.h; ++kh) {
                const auto [oh_lo, oh_hi] = valid_range(static_cast<std::int64_t>(os.h),
                                                        static_cast<std::int64_t>(xs.h), s,
                                                        static_cast<std::int64_t>(kh) - g.padding);
                for (std::size_t kw = 0; kw < ws.w; ++kw) {
                    const double wv = w.at(oc, ic, kh, kw);
                    const std::int64_t off_w = static_cast<std::int64_t>(kw) - g.padding;
                    const auto [ow_lo, ow_hi] = valid_range(static_cast<std::int64_t>(os.w),
                                                            static_cast<std::int64_t>(xs.w), s, off_w);
                    for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                        const std::int64_t ih = oh * s + static_cast<std::int64_t>(kh) - g.padding;
                        double* row = dst + ih * static_cast<std::int64_t>(xs.w);
                        const double* grow = gsrc + oh * static_cast<std::int64_t>(os.w);
                        for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                            row[ow * s + off_w] += wv * grow[ow];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, ConvGeometry g, Tensor& grad_w,
                        Tensor& grad_b) {
    const Shape xs = x.shape();
    const Shape ws = grad_w.shape();
    const Shape os = grad_out.shape();
    const std::int64_t s = g.stride;

#pragma omp parallel for schedule(static)
    for (std::int64_t oc_i = 0; oc_i < static_cast<std::int64_t>(ws.n); ++oc_i) {
        const auto oc = static_cast<std::size_t>(oc_i);
        for (std::size_t n = 0; n < xs.n; ++n) {
            const double* gsrc = grad_out.data() + grad_out.offset(n, oc, 0, 0);
            double bsum = 0.0;
            for (std::size_t i = 0; i < os.plane(); ++i) bsum += gsrc[i];
            grad_b[oc] += bsum;
            for (std::size_t ic = 0; ic < xs.c; ++ic) {
                const double* src = x.data() + x.offset(n, ic, 0, 0);
                for (std::size_t kh = 0; kh < ws.h; ++kh) {
                    const auto [oh_lo, oh_hi] = valid_range(static_cast<std::int64_t>(os.h),
                                                            static_cast<std::int64_t>(xs.h), s,
                                                            static_cast<std::int64_t>(kh) - g.padding);
                    for (std::size_t kw = 0; kw < ws.w; ++kw) {
                        const std::int64_t off_w = static_cast<std::int64_t>(kw) - g.padding;
                        const auto [ow_lo, ow_hi] = valid_range(static_cast<std::int64_t>(os.w),
                                                                static_cast<std::int64_t>(xs.w), s, off_w);
                        double acc = 0.0;
                        for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const std::int64_t ih = oh * s + static_cast<std::int64_t>(kh) - g.padding;
                            const double* row = src + ih * static_cast<std::int64_t>(xs.w);
                            const double* grow = gsrc + oh * static_cast<std::int64_t>(os.w);
                            for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * row[ow * s + off_w];
                        }
                        grad_w.at(oc, ic, kh, kw) += acc;
                    }
                }
            }
        }
    }
}

MedianResult median_channels(const Tensor& x) {
    const Shape xs = x.shape();
    if (xs.numel() == 0) throw ShapeError("median_pool_channels: empty tensor " + xs.str());
    MedianResult r{Tensor(Shape{xs.n, 1, xs.h, xs.w}), {}, {}};
    const std::size_t positions = xs.n * xs.plane();
    r.lower.resize(positions);
    r.upper.resize(positions);
    const std::size_t plane = xs.plane();
    const std::size_t c = xs.c;

#pragma omp parallel
    {
        std::vector<std::pair<double, std::uint32_t>> buf(c);
#pragma omp for schedule(static)
        for (std::int64_t pos_i = 0; pos_i < static_cast<std::int64_t>(positions); ++pos_i) {
            const auto pos = static_cast<std::size_t>(pos_i);
            const std::size_t n = pos / plane;
            const std::size_t hw = pos % plane;
            const double* base = x.data() + n * c * plane + hw;
            for (std::size_t ch = 0; ch < c; ++ch) buf[ch] = {base[ch * plane], static_cast<std::uint32_t>(ch)};
            std::sort(buf.begin(), buf.end());
            // Sorting (value, index) pairs puts the lowest channel first within a tie group.
            auto first_of_value = [&](std::size_t k) {
                while (k > 0 && buf[k - 1].first == buf[k].first) --k;
                return buf[k].second;
            };
            const std::size_t k_lo = (c - 1) / 2;
            const std::size_t k_hi = c / 2;
            r.value[pos] = 0.5 * (buf[k_lo].first + buf[k_hi].first);
            r.lower[pos] = first_of_value(k_lo);
            r.upper[pos] = first_of_value(k_hi);
        }
    }
    return r;
}

void validate_ratio(ResizeRatio r) {
    const bool ok = (r.num == 1 && (r.den == 2 || r.den == 4)) || (r.den == 1 && (r.num == 2 || r.num == 4));
    if (!ok) {
        throw ConfigError("resize_bilinear: unsupported scale " + std::to_string(r.num) + "/" +
                          std::to_string(r.den) + " (supported: 1/4, 1/2, 2, 4)");
    }
}

Shape resized_shape(const Shape& x, ResizeRatio r) {
    validate_ratio(r);
    const auto num = static_cast<std::size_t>(r.num);
    const auto den = static_cast<std::size_t>(r.den);
    if ((x.h * num) % den != 0 || (x.w * num) % den != 0 || x.h * num < den || x.w * num < den) {
        throw ShapeError("resize_bilinear: " + x.str() + " cannot be scaled by " + std::to_string(r.num) + "/" +
                         std::to_string(r.den) + " to whole non-empty dims");
    }
    return Shape{x.n, x.c, x.h * num / den, x.w * num / den};
}

Tensor resize_bilinear(const Tensor& x, ResizeRatio r) {
    const Shape xs = x.shape();
    const Shape os = resized_shape(xs, r);
    const AxisTaps ty = axis_taps(xs.h, os.h);
    const AxisTaps tx = axis_taps(xs.w, os.w);
    Tensor out(os);
    const auto planes = static_cast<std::int64_t>(xs.n * xs.c);

#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* src = x.data() + static_cast<std::size_t>(p) * xs.plane();
        double* dst = out.data() + static_cast<std::size_t>(p) * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
            const double* r0 = src + ty.i0[oy] * static_cast<std::int64_t>(xs.w);
            const double* r1 = src + ty.i1[oy] * static_cast<std::int64_t>(xs.w);
            const double fy = ty.frac[oy];
            for (std::size_t ox = 0; ox < os.w; ++ox) {
                const double fx = tx.frac[ox];
                const double top = (1.0 - fx) * r0[tx.i0[ox]] + fx * r0[tx.i1[ox]];
                const double bot = (1.0 - fx) * r1[tx.i0[ox]] + fx * r1[tx.i1[ox]];
                dst[oy * os.w + ox] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

Tensor resize_bilinear_grad(const Tensor& grad_out, const Shape& xs, ResizeRatio r) {
    const Shape os = resized_shape(xs, r);
    if (grad_out.shape() != os) throw_shape_error("resize_bilinear_grad", grad_out.shape(), os);
    const AxisTaps ty = axis_taps(xs.h, os.h);
    const AxisTaps tx = axis_taps(xs.w, os.w);
    Tensor gx(xs);
    const auto planes = static_cast<std::int64_t>(xs.n * xs.c);

#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        double* dst = gx.data() + static_cast<std::size_t>(p) * xs.plane();
        const double* src = grad_out.data() + static_cast<std::size_t>(p) * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
            double* r0 = dst + ty.i0[oy] * static_cast<std::int64_t>(xs.w);
            double* r1 = dst + ty.i1[oy] * static_cast<std::int64_t>(xs.w);
            const double fy = ty.frac[oy];
            for (std::size_t ox = 0; ox < os.w; ++ox) {
                const double g = src[oy * os.w + ox];
                const double fx = tx.frac[ox];
                r0[tx.i0[ox]] += (1.0 - fy) * (1.0 - fx) * g;
                r0[tx.i1[ox]] += (1.0 - fy) * fx * g;
                r1[tx.i0[ox]] += fy * (1.0 - fx) * g;
                r1[tx.i1[ox]] += fy * fx * g;
            }
        }
    }
    return gx;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, n));
#else
    (void)n;
#endif
}

}  // namespace tse::kernels
