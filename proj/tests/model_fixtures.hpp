#pragma once

// Helpers that turn a block of the enhancer into a TapeFunction over
// (input, parameters under a prefix), for finite-difference checks.

#include <functional>
#include <string>
#include <vector>

#include "tse/grad_check.hpp"
#include "tse/model.hpp"
#include "tse/rng.hpp"

namespace tse::testing {

struct BlockProblem {
    TapeFunction fn;
    std::vector<Tensor> inputs;  // inputs[0] is the block input, the rest are parameters
    std::vector<std::string> paths;
};

using BlockFn = std::function<Var(const ParamBinding&, std::span<const Var>)>;

/// `data_inputs` leading tensors are passed to `block` as its data arguments,
/// followed by every parameter whose path starts with `prefix`.
inline BlockProblem make_block_problem(const ModelParams& params, const std::string& prefix,
                                       std::vector<Tensor> data_inputs, BlockFn block) {
    BlockProblem problem;
    const std::size_t n_data = data_inputs.size();
    problem.inputs = std::move(data_inputs);
    for (const auto& [path, t] : params.tensors) {
        if (path.rfind(prefix, 0) == 0) {
            problem.paths.push_back(path);
            problem.inputs.push_back(t);
        }
    }
    const NetConfig config = params.config;
    const std::vector<std::string> paths = problem.paths;
    problem.fn = [config, paths, n_data, block](std::span<const Var> v) {
        std::map<std::string, Var> bound;
        for (std::size_t i = 0; i < paths.size(); ++i) bound.emplace(paths[i], v[n_data + i]);
        const ParamBinding binding(config, std::move(bound));
        return block(binding, v.subspan(0, n_data));
    };
    return problem;
}

inline Tensor uniform_tensor(Shape s, Rng& rng, double lo, double hi) {
    Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Randomizes every bias so residual and gate paths are exercised away from zero.
inline ModelParams randomized_model(NetConfig config, std::uint64_t seed) {
    config.seed = seed;
    ModelParams p = init_model(config);
    Rng rng(seed ^ 0xb1a5ULL);
    for (auto& [path, t] : p.tensors) {
        if (path.size() >= 4 && path.compare(path.size() - 4, 4, "bias") == 0) {
            for (double& v : t.values()) v = rng.uniform(-0.2, 0.2);
        }
    }
    return p;
}

}  // namespace tse::testing
