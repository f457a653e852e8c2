#pragma once

// Finite-difference sweep over every differentiable primitive and every
// composed block of the enhancer.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tse/grad_check.hpp"
#include "tse/model.hpp"

namespace tse {

struct GradSuiteOptions {
    int seeds = 20;
    std::uint64_t first_seed = 0;
    double eps = 1e-5;
    /// Sampled coordinates per tensor for the MRB and full-network cases.
    std::size_t sampled_coords = 4;
    /// Random joint directions for the MRB and full-network cases.
    std::size_t directions = 4;
    /// Block inputs are redrawn until every relu/clamp/max/median sits at least
    /// this many eps away from its kink, so probes stay on one smooth piece.
    double kink_guard = 20.0;
    int max_redraws = 200;
    NetConfig config = NetConfig::test();
};

struct GradSuiteEntry {
    std::string name;
    std::uint64_t seed = 0;
    double max_rel_error = 0.0;
    std::size_t coords = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double kink_margin = 0.0;  // at the checked point
    int redraws = 0;
};

/// Model with every bias drawn from U(-0.2, 0.2) so gates and residual paths
/// sit away from their zero-initialized values.
ModelParams randomized_biases(NetConfig config, std::uint64_t seed);

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts,
                                               const std::function<void(const GradSuiteEntry&)>& on_entry = {});

std::string grad_suite_csv(const std::vector<GradSuiteEntry>& entries);

}  // namespace tse
