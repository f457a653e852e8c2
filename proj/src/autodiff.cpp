#include "tse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace tse {

detail::Node& Var::node() const {
    if (!node_) throw NotOnTapeError("use of an empty Var");
    return *node_;
}

void Var::accumulate_grad(const Tensor& g) const {
    detail::Node& n = node();
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) throw_shape_error("gradient accumulation", g.shape(), n.value.shape());
    if (n.grad.empty() && n.value.numel() != 0) {
        n.grad = g;
        return;
    }
    double* dst = n.grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

Var Tape::leaf(Tensor value) {
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->tape = this;
    node->requires_grad = true;
    node->recorded = true;
    node->index = nodes_.size();
    nodes_.push_back(node);
    return Var(std::move(node));
}

Var Tape::constant(Tensor value) {
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->tape = this;
    return Var(std::move(node));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, std::function<void(const Tensor&)> backward) {
    if (!value.all_finite()) {
        // Finite inputs must give finite outputs; anything else is a bug upstream.
        throw std::domain_error("non-finite value produced by op (output shape " + value.shape().str() + ")");
    }
    bool needs_grad = false;
    for (const Var& in : inputs) {
        if (&in.tape() != this) throw NotOnTapeError("op mixes Vars from different tapes");
        needs_grad = needs_grad || in.requires_grad();
    }
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->tape = this;
    if (needs_grad && recording()) {
        node->requires_grad = true;
        node->recorded = true;
        node->backward = std::move(backward);
        node->index = nodes_.size();
        nodes_.push_back(node);
    }
    return Var(std::move(node));
}

void Tape::check_owned(const Var& v, const char* what) const {
    if (!v.valid()) throw NotOnTapeError(std::string(what) + ": empty Var");
    const detail::Node& n = *v.node_;
    if (n.tape != this || !n.recorded || n.index >= nodes_.size() || nodes_[n.index].get() != &n) {
        throw NotOnTapeError(std::string(what) + ": node is not on this tape");
    }
}

void Tape::backward(const Var& loss) {
    check_owned(loss, "backward");
    if (loss.value().numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + loss.shape().str());
    }
    loss.accumulate_grad(Tensor(loss.shape(), 1.0));
    for (std::size_t i = loss.node_->index + 1; i-- > 0;) {
        detail::Node& n = *nodes_[i];
        if (n.backward && !n.grad.empty()) n.backward(n.grad);
    }
}

Tensor Tape::grad(const Var& v) const {
    check_owned(v, "grad");
    const detail::Node& n = *v.node_;
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n->grad = Tensor();
}

namespace ops {

namespace {

Tape& tape_of(const Var& a) { return a.tape(); }

bool broadcastable(const Shape& full, const Shape& part) {
    return part.n == full.n && (part.c == full.c || part.c == 1) && (part.h == full.h || part.h == 1) &&
           (part.w == full.w || part.w == 1);
}

// Offset into a broadcast operand for each element of the full shape.
std::vector<std::size_t> broadcast_offsets(const Shape& full, const Shape& part) {
    std::vector<std::size_t> idx(full.numel());
    std::size_t i = 0;
    for (std::size_t n = 0; n < full.n; ++n)
        for (std::size_t c = 0; c < full.c; ++c)
            for (std::size_t h = 0; h < full.h; ++h)
                for (std::size_t w = 0; w < full.w; ++w) {
                    const std::size_t pc = part.c == 1 ? 0 : c;
                    const std::size_t ph = part.h == 1 ? 0 : h;
                    const std::size_t pw = part.w == 1 ? 0 : w;
                    idx[i++] = ((n * part.c + pc) * part.h + ph) * part.w + pw;
                }
    return idx;
}

Tensor reduce_to(const Tensor& g, const Shape& part, const std::vector<std::size_t>& offsets) {
    Tensor out(part);
    for (std::size_t i = 0; i < g.numel(); ++i) out[offsets[i]] += g[i];
    return out;
}

enum class BinOp { kAdd, kMul, kSub };

Var binary(const Var& x_in, const Var& y_in, BinOp op, const char* name) {
    Var x = x_in;
    Var y = y_in;
    if (x.shape() != y.shape() && op != BinOp::kSub && broadcastable(y.shape(), x.shape()) &&
        !broadcastable(x.shape(), y.shape())) {
        std::swap(x, y);
    }
    const Shape xs = x.shape();
    const Shape ys = y.shape();
    if (!broadcastable(xs, ys)) throw_shape_error(name, xs, ys);
    const bool same = xs == ys;
    auto offsets = same ? std::vector<std::size_t>{} : broadcast_offsets(xs, ys);
    auto yoff = [&](std::size_t i) { return same ? i : offsets[i]; };

    Tensor out(xs);
    const double* xv = x.value().data();
    const double* yv = y.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double a = xv[i];
        const double b = yv[yoff(i)];
        out[i] = op == BinOp::kAdd ? a + b : op == BinOp::kMul ? a * b : a - b;
    }
    const Var inputs[] = {x, y};
    return tape_of(x).record(std::move(out), inputs, [x, y, op, same, offsets = std::move(offsets)](const Tensor& g) {
        const Shape ys = y.shape();
        if (op == BinOp::kMul) {
            const double* xv = x.value().data();
            const double* yv = y.value().data();
            Tensor gx(g.shape());
            Tensor gy_full(g.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const std::size_t j = same ? i : offsets[i];
                gx[i] = g[i] * yv[j];
                gy_full[i] = g[i] * xv[i];
            }
            x.accumulate_grad(gx);
            y.accumulate_grad(same ? gy_full : reduce_to(gy_full, ys, offsets));
            return;
        }
        x.accumulate_grad(g);
        Tensor gy = same ? g : reduce_to(g, ys, offsets);
        if (op == BinOp::kSub) {
            for (double& v : gy.values()) v = -v;
        }
        y.accumulate_grad(gy);
    });
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
    Tensor out(x.shape());
    const double* xv = x.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(xv[i]);
    const Var inputs[] = {x};
    return tape_of(x).record(std::move(out), inputs, [x, deriv](const Tensor& g) {
        const double* xv = x.value().data();
        Tensor gx(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * deriv(xv[i]);
        x.accumulate_grad(gx);
    });
}

double sigmoid_scalar(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
    const kernels::ConvGeometry geo{stride, padding};
    Tensor out = kernels::conv2d(x.value(), w.value(), b.value(), geo);
    const Var inputs[] = {x, w, b};
    return tape_of(x).record(std::move(out), inputs, [x, w, b, geo](const Tensor& g) {
        if (x.requires_grad()) x.accumulate_grad(kernels::conv2d_grad_input(g, w.value(), x.shape(), geo));
        if (w.requires_grad() || b.requires_grad()) {
            Tensor gw(w.shape());
            Tensor gb(b.shape());
            kernels::conv2d_grad_params(g, x.value(), geo, gw, gb);
            w.accumulate_grad(gw);
            b.accumulate_grad(gb);
        }
    });
}

Var median_pool_channels(const Var& x) {
    if (x.shape().c < 1) throw ShapeError("median_pool_channels: needs c >= 1, got " + x.shape().str());
    kernels::MedianResult r = kernels::median_channels(x.value());
    if (tape_of(x).recording()) {
        const Shape xs = x.shape();
        const std::size_t plane = xs.plane();
        double margin = std::numeric_limits<double>::infinity();
        for (std::size_t pos = 0; pos < r.lower.size(); ++pos) {
            const double* base = x.value().data() + (pos / plane) * xs.c * plane + pos % plane;
            const double a = base[r.lower[pos] * plane], b = base[r.upper[pos] * plane];
            const double lo = std::min(a, b), hi = std::max(a, b);
            for (std::size_t c = 0; c < xs.c; ++c) {
                if (c == r.lower[pos] || c == r.upper[pos]) continue;
                const double v = base[c * plane];
                margin = std::min(margin, v < lo ? lo - v : v > hi ? v - hi : 0.0);
            }
        }
        tape_of(x).note_kink_margin(margin);
    }
    Tensor out = std::move(r.value);
    const Var inputs[] = {x};
    return tape_of(x).record(
        std::move(out), inputs, [x, lower = std::move(r.lower), upper = std::move(r.upper)](const Tensor& g) {
            const Shape xs = x.shape();
            const std::size_t plane = xs.plane();
            Tensor gx(xs);
            for (std::size_t pos = 0; pos < lower.size(); ++pos) {
                const std::size_t n = pos / plane;
                const std::size_t hw = pos % plane;
                const double half = 0.5 * g[pos];
                gx[(n * xs.c + lower[pos]) * plane + hw] += half;
                gx[(n * xs.c + upper[pos]) * plane + hw] += half;
            }
            x.accumulate_grad(gx);
        });
}

Var mean_pool_channels(const Var& x) {
    const Shape xs = x.shape();
    Tensor out(Shape{xs.n, 1, xs.h, xs.w});
    const std::size_t plane = xs.plane();
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t i = 0; i < plane; ++i) out[n * plane + i] += x.value()[(n * xs.c + c) * plane + i];
    for (double& v : out.values()) v /= static_cast<double>(xs.c);
    const Var inputs[] = {x};
    return tape_of(x).record(std::move(out), inputs, [x](const Tensor& g) {
        const Shape xs = x.shape();
        const std::size_t plane = xs.plane();
        Tensor gx(xs);
        for (std::size_t n = 0; n < xs.n; ++n)
            for (std::size_t c = 0; c < xs.c; ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gx[(n * xs.c + c) * plane + i] = g[n * plane + i] / static_cast<double>(xs.c);
        x.accumulate_grad(gx);
    });
}

Var max_pool_channels(const Var& x) {
    const Shape xs = x.shape();
    const std::size_t plane = xs.plane();
    Tensor out(Shape{xs.n, 1, xs.h, xs.w});
    std::vector<std::uint32_t> arg(xs.n * plane, 0);
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
            double best = x.value()[n * xs.c * plane + i];
            double second = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 1; c < xs.c; ++c) {
                const double v = x.value()[(n * xs.c + c) * plane + i];
                if (v > best) {
                    second = best;
                    best = v;
                    arg[n * plane + i] = static_cast<std::uint32_t>(c);
                } else {
                    second = std::max(second, v);
                }
            }
            out[n * plane + i] = best;
            if (tape_of(x).recording()) tape_of(x).note_kink_margin(best - second);
        }
    const Var inputs[] = {x};
    return tape_of(x).record(std::move(out), inputs, [x, arg = std::move(arg)](const Tensor& g) {
        const Shape xs = x.shape();
        const std::size_t plane = xs.plane();
        Tensor gx(xs);
        for (std::size_t pos = 0; pos < arg.size(); ++pos) {
            gx[((pos / plane) * xs.c + arg[pos]) * plane + pos % plane] += g[pos];
        }
        x.accumulate_grad(gx);
    });
}

Var global_pool(const Var& x, PoolMode mode) {
    const Shape xs = x.shape();
    if (xs.plane() == 0) throw ShapeError("global_pool: empty spatial extent " + xs.str());
    const std::size_t plane = xs.plane();
    Tensor out(Shape{xs.n, xs.c, 1, 1});
    std::vector<std::size_t> arg(xs.n * xs.c, 0);
    for (std::size_t p = 0; p < xs.n * xs.c; ++p) {
        const double* src = x.value().data() + p * plane;
        if (mode == PoolMode::kAvg) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += src[i];
            out[p] = acc / static_cast<double>(plane);
        } else {
            // std::max_element returns the first maximum, which is where ties route.
            arg[p] = static_cast<std::size_t>(std::max_element(src, src + plane) - src);
            out[p] = src[arg[p]];
            if (tape_of(x).recording()) {
                double second = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < plane; ++i)
                    if (i != arg[p]) second = std::max(second, src[i]);
                tape_of(x).note_kink_margin(out[p] - second);
            }
        }
    }
    const Var inputs[] = {x};
    return tape_of(x).record(std::move(out), inputs, [x, mode, arg = std::move(arg)](const Tensor& g) {
        const Shape xs = x.shape();
        const std::size_t plane = xs.plane();
        Tensor gx(xs);
        for (std::size_t p = 0; p < xs.n * xs.c; ++p) {
            if (mode == PoolMode::kAvg) {
                const double v = g[p] / static_cast<double>(plane);
                std::fill(gx.data() + p * plane, gx.data() + (p + 1) * plane, v);
            } else {
                gx[p * plane + arg[p]] = g[p];
            }
        }
        x.accumulate_grad(gx);
    });
}

Var resize_bilinear(const Var& x, kernels::ResizeRatio ratio) {
    Tensor out = kernels::resize_bilinear(x.value(), ratio);
    const Var inputs[] = {x};
    return tape_of(x).record(std::move(out), inputs, [x, ratio](const Tensor& g) {
        x.accumulate_grad(kernels::resize_bilinear_grad(g, x.shape(), ratio));
    });
}

Var add(const Var& x, const Var& y) { return binary(x, y, BinOp::kAdd, "add"); }
Var mul(const Var& x, const Var& y) { return binary(x, y, BinOp::kMul, "mul"); }
Var sub(const Var& x, const Var& y) { return binary(x, y, BinOp::kSub, "sub"); }

Var scale(const Var& x, double s) {
    return unary(x, [s](double v) { return s * v; }, [s](double) { return s; });
}

namespace {

void note_distance(const Var& x, double a, double b) {
    Tape& tape = tape_of(x);
    if (!tape.recording()) return;
    double m = std::numeric_limits<double>::infinity();
    for (double v : x.value().values()) m = std::min({m, std::abs(v - a), std::abs(v - b)});
    tape.note_kink_margin(m);
}

}  // namespace

Var relu(const Var& x) {
    note_distance(x, 0.0, 0.0);
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
    return unary(x, sigmoid_scalar, [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 - s);
    });
}

Var clamp(const Var& x, double lo, double hi) {
    note_distance(x, lo, hi);
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

std::vector<Var> softmax_over_branches(std::span<const Var> logits) {
    if (logits.empty()) throw ShapeError("softmax_over_branches: no branches");
    const Shape s = logits.front().shape();
    for (const Var& l : logits) {
        if (l.shape() != s) throw_shape_error("softmax_over_branches", s, l.shape());
    }
    const std::size_t count = logits.size();
    std::vector<Tensor> weights(count, Tensor(s));
    for (std::size_t i = 0; i < s.numel(); ++i) {
        double top = logits[0].value()[i];
        for (std::size_t b = 1; b < count; ++b) top = std::max(top, logits[b].value()[i]);
        double denom = 0.0;
        for (std::size_t b = 0; b < count; ++b) {
            weights[b][i] = std::exp(logits[b].value()[i] - top);
            denom += weights[b][i];
        }
        for (std::size_t b = 0; b < count; ++b) weights[b][i] /= denom;
    }
    auto shared = std::make_shared<std::vector<Tensor>>(weights);
    std::vector<Var> ins(logits.begin(), logits.end());
    std::vector<Var> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(tape_of(logits[0]).record(std::move(weights[k]), logits, [ins, shared, k](const Tensor& g) {
            const std::vector<Tensor>& w = *shared;
            // d w_k / d z_j = w_k (delta_kj - w_j)
            for (std::size_t j = 0; j < ins.size(); ++j) {
                Tensor gz(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    const double delta = j == k ? 1.0 : 0.0;
                    gz[i] = g[i] * w[k][i] * (delta - w[j][i]);
                }
                ins[j].accumulate_grad(gz);
            }
        }));
    }
    return out;
}

Var concat_channels(std::span<const Var> parts) {
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (const Var& p : parts) values.push_back(p.value());
    Tensor out = tse::concat_channels(values);
    std::vector<Var> ins(parts.begin(), parts.end());
    return tape_of(parts[0]).record(std::move(out), parts, [ins](const Tensor& g) {
        std::size_t c0 = 0;
        for (const Var& p : ins) {
            const std::size_t c = p.shape().c;
            if (p.requires_grad()) p.accumulate_grad(g.slice_channels(c0, c0 + c));
            c0 += c;
        }
    });
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (double v : x.value().values()) acc += v;
    const Var inputs[] = {x};
    return tape_of(x).record(Tensor(Shape{1, 1, 1, 1}, acc), inputs,
                             [x](const Tensor& g) { x.accumulate_grad(Tensor(x.shape(), g[0])); });
}

Var mean(const Var& x) {
    const auto count = static_cast<double>(x.value().numel());
    return scale(sum(x), 1.0 / count);
}

}  // namespace ops
}  // namespace tse
