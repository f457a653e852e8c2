#include "tse/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tse/rng.hpp"

namespace tse {

namespace {

class Scalarizer {
public:
    explicit Scalarizer(std::uint64_t seed) : seed_(seed) {}

    Var operator()(Tape& tape, const Var& out) {
        if (out.value().numel() == 1) return out;
        if (projection_.shape() != out.shape()) {
            projection_ = Tensor(out.shape());
            Rng rng(seed_ ^ 0x5ca1ab1eULL);
            for (double& v : projection_.values()) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        }
        return ops::sum(ops::mul(out, tape.constant(projection_)));
    }

private:
    std::uint64_t seed_;
    Tensor projection_;
};

double evaluate(const TapeFunction& f, const std::vector<Tensor>& inputs, Scalarizer& scalarize) {
    Tape tape(Tape::Mode::kInference);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return scalarize(tape, f(vars)).value()[0];
}

std::vector<Tensor> analytic(const TapeFunction& f, const std::vector<Tensor>& inputs, Scalarizer& scalarize) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var loss = scalarize(tape, f(vars));
    tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (const Var& v : vars) grads.push_back(tape.grad(v));
    return grads;
}

double rel_error(double a, double n) { return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)}); }

}  // namespace

GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
    Scalarizer scalarize(opts.seed);
    const std::vector<Tensor> grads = analytic(f, inputs, scalarize);
    Rng pick(opts.seed ^ 0xc0ffeeULL);
    GradCheckResult result;
    std::vector<Tensor> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t count = inputs[k].numel();
        std::vector<std::size_t> coords(count);
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.max_coords_per_input != 0 && count > opts.max_coords_per_input) {
            for (std::size_t i = 0; i < opts.max_coords_per_input; ++i) {
                std::swap(coords[i], coords[i + pick.below(count - i)]);
            }
            coords.resize(opts.max_coords_per_input);
        }
        for (std::size_t idx : coords) {
            const double orig = inputs[k][idx];
            probe[k][idx] = orig + opts.eps;
            const double up = evaluate(f, probe, scalarize);
            probe[k][idx] = orig - opts.eps;
            const double down = evaluate(f, probe, scalarize);
            probe[k][idx] = orig;
            const double numeric = (up - down) / (2.0 * opts.eps);
            const double err = rel_error(grads[k][idx], numeric);
            ++result.coords_checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = k;
                result.worst_index = idx;
            }
        }
    }
    return result;
}

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps) {
    const TapeFunction wrapped = [&f](std::span<const Var> v) { return f(v[0]); };
    return grad_check(wrapped, {x}, GradCheckOptions{eps, 0, 0}).max_rel_error;
}

GradCheckResult directional_check(const TapeFunction& f, const std::vector<Tensor>& inputs, std::size_t directions,
                                  const GradCheckOptions& opts) {
    Scalarizer scalarize(opts.seed);
    const std::vector<Tensor> grads = analytic(f, inputs, scalarize);
    Rng rng(opts.seed ^ 0xd1ec7ULL);
    GradCheckResult result;
    for (std::size_t d = 0; d < directions; ++d) {
        std::vector<Tensor> dir;
        double norm2 = 0.0;
        for (const Tensor& t : inputs) {
            Tensor v(t.shape());
            for (double& e : v.values()) {
                e = rng.normal();
                norm2 += e * e;
            }
            dir.push_back(std::move(v));
        }
        const double inv = 1.0 / std::sqrt(norm2);
        double projected = 0.0;
        std::vector<Tensor> plus = inputs;
        std::vector<Tensor> minus = inputs;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
                const double v = dir[k][i] * inv;
                projected += grads[k][i] * v;
                plus[k][i] += opts.eps * v;
                minus[k][i] -= opts.eps * v;
            }
        }
        const double numeric = (evaluate(f, plus, scalarize) - evaluate(f, minus, scalarize)) / (2.0 * opts.eps);
        const double err = rel_error(projected, numeric);
        ++result.coords_checked;
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_index = d;
        }
    }
    return result;
}

}  // namespace tse
