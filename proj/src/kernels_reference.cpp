#include <algorithm>
#include <cmath>
#include <cstdint>

#include "tse/kernels.hpp"

namespace tse::kernels::reference {

namespace {

bool inside(std::int64_t v, std::size_t extent) { return v >= 0 && v < static_cast<std::int64_t>(extent); }

double source_coord(std::size_t o, std::size_t in, std::size_t out) {
    const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(src, 0.0, static_cast<double>(in - 1));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
    check_conv2d_args(x.shape(), w.shape(), b.shape(), g);
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const Shape os = conv2d_output_shape(xs, ws, g);
    Tensor out(os);
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t oc = 0; oc < os.c; ++oc)
            for (std::size_t oh = 0; oh < os.h; ++oh)
                for (std::size_t ow = 0; ow < os.w; ++ow) {
                    double acc = b[oc];
                    for (std::size_t ic = 0; ic < xs.c; ++ic)
                        for (std::size_t kh = 0; kh < ws.h; ++kh)
                            for (std::size_t kw = 0; kw < ws.w; ++kw) {
                                const auto ih = static_cast<std::int64_t>(oh * g.stride + kh) - g.padding;
                                const auto iw = static_cast<std::int64_t>(ow * g.stride + kw) - g.padding;
                                if (!inside(ih, xs.h) || !inside(iw, xs.w)) continue;
                                acc += w.at(oc, ic, kh, kw) *
                                       x.at(n, ic, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
                            }
                    out.at(n, oc, oh, ow) = acc;
                }
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& xs, ConvGeometry g) {
    const Shape ws = w.shape();
    const Shape os = grad_out.shape();
    Tensor gx(xs);
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t oc = 0; oc < os.c; ++oc)
            for (std::size_t oh = 0; oh < os.h; ++oh)
                for (std::size_t ow = 0; ow < os.w; ++ow)
                    for (std::size_t ic = 0; ic < xs.c; ++ic)
                        for (std::size_t kh = 0; kh < ws.h; ++kh)
                            for (std::size_t kw = 0; kw < ws.w; ++kw) {
                                const auto ih = static_cast<std::int64_t>(oh * g.stride + kh) - g.padding;
                                const auto iw = static_cast<std::int64_t>(ow * g.stride + kw) - g.padding;
                                if (!inside(ih, xs.h) || !inside(iw, xs.w)) continue;
                                gx.at(n, ic, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) +=
                                    w.at(oc, ic, kh, kw) * grad_out.at(n, oc, oh, ow);
                            }
    return gx;
}

void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, ConvGeometry g, Tensor& grad_w,
                        Tensor& grad_b) {
    const Shape xs = x.shape();
    const Shape ws = grad_w.shape();
    const Shape os = grad_out.shape();
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t oc = 0; oc < os.c; ++oc)
            for (std::size_t oh = 0; oh < os.h; ++oh)
                for (std::size_t ow = 0; ow < os.w; ++ow) {
                    const double go = grad_out.at(n, oc, oh, ow);
                    grad_b[oc] += go;
                    for (std::size_t ic = 0; ic < xs.c; ++ic)
                        for (std::size_t kh = 0; kh < ws.h; ++kh)
                            for (std::size_t kw = 0; kw < ws.w; ++kw) {
                                const auto ih = static_cast<std::int64_t>(oh * g.stride + kh) - g.padding;
                                const auto iw = static_cast<std::int64_t>(ow * g.stride + kw) - g.padding;
                                if (!inside(ih, xs.h) || !inside(iw, xs.w)) continue;
                                grad_w.at(oc, ic, kh, kw) +=
                                    go * x.at(n, ic, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
                            }
                }
}

MedianResult median_channels(const Tensor& x) {
    const Shape xs = x.shape();
    if (xs.numel() == 0) throw ShapeError("median_pool_channels: empty tensor " + xs.str());
    MedianResult r{Tensor(Shape{xs.n, 1, xs.h, xs.w}), {}, {}};
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t h = 0; h < xs.h; ++h)
            for (std::size_t w = 0; w < xs.w; ++w) {
                std::vector<double> vals(xs.c);
                for (std::size_t c = 0; c < xs.c; ++c) vals[c] = x.at(n, c, h, w);
                std::vector<double> sorted = vals;
                std::sort(sorted.begin(), sorted.end());
                const double lo = sorted[(xs.c - 1) / 2];
                const double hi = sorted[xs.c / 2];
                r.value.at(n, 0, h, w) = 0.5 * (lo + hi);
                const auto lowest_with = [&](double v) {
                    return static_cast<std::uint32_t>(std::find(vals.begin(), vals.end(), v) - vals.begin());
                };
                r.lower.push_back(lowest_with(lo));
                r.upper.push_back(lowest_with(hi));
            }
    return r;
}

Tensor resize_bilinear(const Tensor& x, ResizeRatio r) {
    const Shape xs = x.shape();
    const Shape os = resized_shape(xs, r);
    Tensor out(os);
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t c = 0; c < os.c; ++c)
            for (std::size_t oy = 0; oy < os.h; ++oy)
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                    const double sy = source_coord(oy, xs.h, os.h);
                    const double sx = source_coord(ox, xs.w, os.w);
                    const auto y0 = static_cast<std::size_t>(std::floor(sy));
                    const auto x0 = static_cast<std::size_t>(std::floor(sx));
                    const std::size_t y1 = std::min(y0 + 1, xs.h - 1);
                    const std::size_t x1 = std::min(x0 + 1, xs.w - 1);
                    const double fy = sy - static_cast<double>(y0);
                    const double fx = sx - static_cast<double>(x0);
                    out.at(n, c, oy, ox) = (1 - fy) * (1 - fx) * x.at(n, c, y0, x0) + (1 - fy) * fx * x.at(n, c, y0, x1) +
                                           fy * (1 - fx) * x.at(n, c, y1, x0) + fy * fx * x.at(n, c, y1, x1);
                }
    return out;
}

Tensor resize_bilinear_grad(const Tensor& grad_out, const Shape& xs, ResizeRatio r) {
    const Shape os = resized_shape(xs, r);
    Tensor gx(xs);
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t c = 0; c < os.c; ++c)
            for (std::size_t oy = 0; oy < os.h; ++oy)
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                    const double sy = source_coord(oy, xs.h, os.h);
                    const double sx = source_coord(ox, xs.w, os.w);
                    const auto y0 = static_cast<std::size_t>(std::floor(sy));
                    const auto x0 = static_cast<std::size_t>(std::floor(sx));
                    const std::size_t y1 = std::min(y0 + 1, xs.h - 1);
                    const std::size_t x1 = std::min(x0 + 1, xs.w - 1);
                    const double fy = sy - static_cast<double>(y0);
                    const double fx = sx - static_cast<double>(x0);
                    const double g = grad_out.at(n, c, oy, ox);
                    gx.at(n, c, y0, x0) += (1 - fy) * (1 - fx) * g;
                    gx.at(n, c, y0, x1) += (1 - fy) * fx * g;
                    gx.at(n, c, y1, x0) += fy * (1 - fx) * g;
                    gx.at(n, c, y1, x1) += fy * fx * g;
                }
    return gx;
}

}  // namespace tse::kernels::reference
