#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a node holding a value and (after backward) a
// gradient. Ops append their result node to the tape of their inputs together
// with a closure that pushes the output gradient back to the inputs. Because
// nodes are appended in evaluation order, replaying the tape in reverse is a
// valid topological order and visits every node once.
//
// A tape built with Tape::Mode::kInference records nothing: intermediate
// values are released as soon as the last Var referring to them goes away.

#include <cstddef>
#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "tse/kernels.hpp"
#include "tse/tensor.hpp"

namespace tse {

class Tape;

/// Raised when backward() or grad() is asked about a node the tape never recorded.
class NotOnTapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {
struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(const Tensor&)> backward;
    Tape* tape = nullptr;
    std::size_t index = 0;
    bool requires_grad = false;
    bool recorded = false;
};
}  // namespace detail

class Var {
public:
    Var() = default;

    const Tensor& value() const& { return node().value; }
    Tensor value() const&& { return node().value; }
    const Shape& shape() const { return node().value.shape(); }
    Tape& tape() const { return *node().tape; }
    bool valid() const { return node_ != nullptr; }
    bool requires_grad() const { return node().requires_grad; }

    /// Adds g into this node's gradient buffer (no-op for constants).
    void accumulate_grad(const Tensor& g) const;

private:
    friend class Tape;
    explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    detail::Node& node() const;

    std::shared_ptr<detail::Node> node_;
};

class Tape {
public:
    enum class Mode { kTrain, kInference };

    explicit Tape(Mode mode = Mode::kTrain) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == Mode::kTrain; }

    /// A differentiable input (parameter or image being checked).
    Var leaf(Tensor value);
    /// A value that never receives a gradient.
    Var constant(Tensor value);

    /// Records an op result. `backward` receives the gradient of the result and
    /// must call accumulate_grad on the inputs it depends on. It is dropped when
    /// no input requires a gradient or the tape is not recording.
    Var record(Tensor value, std::span<const Var> inputs, std::function<void(const Tensor&)> backward);

    /// Reverse sweep from a scalar loss (seed gradient 1).
    void backward(const Var& loss);

    /// Gradient buffer of a recorded node; zeros if nothing flowed into it.
    Tensor grad(const Var& v) const;

    void zero_grad();
    std::size_t size() const { return nodes_.size(); }

    /// Smallest distance from a non-differentiable point (relu at 0, clamp
    /// bounds, max and median order changes) over ops recorded while
    /// recording; +inf when there were none.
    double kink_margin() const { return kink_margin_; }
    void note_kink_margin(double m) { kink_margin_ = std::min(kink_margin_, m); }

private:
    void check_owned(const Var& v, const char* what) const;

    Mode mode_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
    std::vector<std::shared_ptr<detail::Node>> nodes_;
};

enum class PoolMode { kAvg, kMax };

namespace ops {

Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int padding = 0);
Var median_pool_channels(const Var& x);
/// Channel-wise mean and max maps (n, 1, h, w); used by the GAP+GMP spatial attention variant.
Var mean_pool_channels(const Var& x);
Var max_pool_channels(const Var& x);
Var global_pool(const Var& x, PoolMode mode);
Var resize_bilinear(const Var& x, kernels::ResizeRatio ratio);

/// Elementwise add/mul. y may broadcast over any of c, h, w where its extent is 1
/// (e.g. (n,c,1,1) gates or (n,1,h,w) maps); n must match.
Var add(const Var& x, const Var& y);
Var mul(const Var& x, const Var& y);
Var sub(const Var& x, const Var& y);
Var scale(const Var& x, double s);

Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Gradient passes where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);

/// Softmax across the branch list at every (n, c, h, w) position.
std::vector<Var> softmax_over_branches(std::span<const Var> logits);
Var concat_channels(std::span<const Var> parts);

/// Scalar (1,1,1,1) reductions.
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace ops
}  // namespace tse
