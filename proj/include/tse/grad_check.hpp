#pragma once

// Finite-difference verification of tape gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tse/autodiff.hpp"

namespace tse {

/// Maps input Vars (all on the same tape) to an output Var. Non-scalar outputs
/// are reduced to a scalar with a fixed random projection before differencing.
using TapeFunction = std::function<Var(std::span<const Var>)>;

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates checked per input; 0 checks every element.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
};

/// Elementwise central differences against the reverse-mode gradient.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts);

/// Single-input convenience form; returns the max relative error.
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps);

/// Directional (Jacobian-vector) check: for random unit directions v over all
/// inputs jointly, compares <grad, v> with (f(x + eps v) - f(x - eps v)) / 2 eps.
GradCheckResult directional_check(const TapeFunction& f, const std::vector<Tensor>& inputs, std::size_t directions,
                                  const GradCheckOptions& opts);

}  // namespace tse
