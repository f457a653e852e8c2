#include "tse/grad_suite.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "tse/rng.hpp"

namespace tse {

ModelParams randomized_biases(NetConfig config, std::uint64_t seed) {
    config.seed = seed;
    ModelParams p = init_model(config);
    Rng rng(seed ^ 0xb1a5ULL);
    for (auto& [path, t] : p.tensors) {
        if (path.size() >= 4 && path.compare(path.size() - 4, 4, "bias") == 0)
            for (double& v : t.values()) v = rng.uniform(-0.2, 0.2);
    }
    return p;
}

namespace {

Tensor uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Values at least `gap` apart and away from the kinks at 0 and +-0.5, so
// order statistics, relu and clamp stay smooth under the probes.
Tensor tie_free(Shape s, Rng& rng, double gap = 1e-3) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        for (;;) {
            const double v = rng.uniform(-1.0, 1.0);
            bool ok = std::abs(v) > gap && std::abs(std::abs(v) - 0.5) > gap;
            for (std::size_t j = 0; ok && j < i; ++j) ok = std::abs(t[j] - v) > gap;
            if (ok) {
                t[i] = v;
                break;
            }
        }
    }
    return t;
}

struct Problem {
    TapeFunction fn;
    std::vector<Tensor> inputs;
};

using BlockFn = std::function<Var(const ParamBinding&, std::span<const Var>)>;

Problem block_problem(const ModelParams& params, const std::string& prefix, std::vector<Tensor> data, BlockFn block) {
    Problem problem;
    const std::size_t n_data = data.size();
    problem.inputs = std::move(data);
    std::vector<std::string> paths;
    for (const auto& [path, t] : params.tensors) {
        if (prefix.empty() || path.rfind(prefix, 0) == 0) {
            paths.push_back(path);
            problem.inputs.push_back(t);
        }
    }
    const NetConfig config = params.config;
    problem.fn = [config, paths, n_data, block](std::span<const Var> v) {
        std::map<std::string, Var> bound;
        for (std::size_t i = 0; i < paths.size(); ++i) bound.emplace(paths[i], v[n_data + i]);
        return block(ParamBinding(config, std::move(bound)), v.subspan(0, n_data));
    };
    return problem;
}

double kink_margin(const TapeFunction& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t));
    fn(vars);
    return tape.kink_margin();
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts,
                                               const std::function<void(const GradSuiteEntry&)>& on_entry) {
    opts.config.validate();
    std::vector<GradSuiteEntry> out;
    const std::size_t c = static_cast<std::size_t>(opts.config.base_channels);
    for (int k = 0; k < opts.seeds; ++k) {
        const std::uint64_t seed = opts.first_seed + static_cast<std::uint64_t>(k);
        Rng rng(seed * 7919 + 1);
        const GradCheckOptions full{opts.eps, 0, seed};
        const GradCheckOptions sampled{opts.eps, opts.sampled_coords, seed};
        auto record = [&](const std::string& name, const GradCheckResult& r, double margin, int redraws) {
            out.push_back({name, seed, r.max_rel_error, r.coords_checked, r.worst_input, r.worst_index, margin, redraws});
            if (on_entry) on_entry(out.back());
        };
        auto check = [&](const std::string& name, const TapeFunction& f, const std::vector<Tensor>& inputs) {
            record(name, grad_check(f, inputs, full), kink_margin(f, inputs), 0);
        };

        check("conv2d", [](std::span<const Var> v) { return ops::conv2d(v[0], v[1], v[2], 1, 1); },
              {uniform({2, 2, 5, 6}, rng), uniform({3, 2, 3, 3}, rng), uniform({3, 1, 1, 1}, rng)});
        check("conv2d_stride2", [](std::span<const Var> v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); },
              {uniform({1, 2, 5, 6}, rng), uniform({3, 2, 3, 3}, rng), uniform({3, 1, 1, 1}, rng)});
        check("median_pool_channels", [](std::span<const Var> v) { return ops::median_pool_channels(v[0]); },
              {tie_free({2, 1 + seed % 9, 3, 3}, rng)});
        check("mean_pool_channels", [](std::span<const Var> v) { return ops::mean_pool_channels(v[0]); },
              {uniform({1, 4, 3, 3}, rng)});
        check("max_pool_channels", [](std::span<const Var> v) { return ops::max_pool_channels(v[0]); },
              {tie_free({1, 4, 3, 3}, rng)});
        check("global_avg_pool", [](std::span<const Var> v) { return ops::global_pool(v[0], PoolMode::kAvg); },
              {uniform({2, 3, 4, 4}, rng)});
        check("global_max_pool", [](std::span<const Var> v) { return ops::global_pool(v[0], PoolMode::kMax); },
              {tie_free({2, 3, 4, 4}, rng)});
        for (kernels::ResizeRatio r : {kernels::ResizeRatio{1, 4}, kernels::ResizeRatio{1, 2}, kernels::ResizeRatio{2, 1},
                                       kernels::ResizeRatio{4, 1}}) {
            check("resize_bilinear_" + std::to_string(r.num) + "/" + std::to_string(r.den),
                  [r](std::span<const Var> v) { return ops::resize_bilinear(v[0], r); }, {uniform({1, 2, 4, 8}, rng)});
        }
        check("add_broadcast", [](std::span<const Var> v) { return ops::add(v[0], v[1]); },
              {uniform({2, 3, 2, 2}, rng), uniform({2, 3, 1, 1}, rng)});
        check("mul_broadcast", [](std::span<const Var> v) { return ops::mul(v[0], v[1]); },
              {uniform({2, 3, 2, 2}, rng), uniform({2, 1, 2, 2}, rng)});
        check("sub", [](std::span<const Var> v) { return ops::sub(v[0], v[1]); },
              {uniform({1, 3, 2, 2}, rng), uniform({1, 3, 2, 2}, rng)});
        check("scale", [](std::span<const Var> v) { return ops::scale(v[0], -1.3); }, {uniform({1, 2, 2, 2}, rng)});
        check("relu", [](std::span<const Var> v) { return ops::relu(v[0]); }, {tie_free({1, 2, 3, 3}, rng)});
        check("sigmoid", [](std::span<const Var> v) { return ops::sigmoid(v[0]); }, {uniform({1, 2, 3, 3}, rng, -4, 4)});
        check("clamp", [](std::span<const Var> v) { return ops::clamp(v[0], -0.5, 0.5); }, {tie_free({1, 2, 3, 3}, rng)});
        check("softmax_over_branches",
              [](std::span<const Var> v) {
                  const auto w = ops::softmax_over_branches(v);
                  return ops::add(ops::scale(w[0], 0.3), ops::add(ops::scale(w[1], -1.7), w[2]));
              },
              {uniform({1, 2, 2, 2}, rng, -3, 3), uniform({1, 2, 2, 2}, rng, -3, 3), uniform({1, 2, 2, 2}, rng, -3, 3)});
        check("concat_channels", [](std::span<const Var> v) { return ops::concat_channels(v); },
              {uniform({2, 1, 2, 3}, rng), uniform({2, 3, 2, 3}, rng)});
        check("sum", [](std::span<const Var> v) { return ops::sum(v[0]); }, {uniform({1, 3, 2, 2}, rng)});
        check("mean", [](std::span<const Var> v) { return ops::mean(v[0]); }, {uniform({1, 3, 2, 2}, rng)});

        const ModelParams p = randomized_biases(opts.config, seed);
        const std::string mrb = "rrg0.mrb0";
        const std::string dau = mrb + ".dau_a.s0";
        const std::string skff = mrb + ".skff_mid.s0";
        const double guard = opts.kink_guard * opts.eps;
        // Draws data inputs until the point is at least `guard` from every kink.
        auto smooth_problem = [&](const std::string& prefix, const std::function<std::vector<Tensor>()>& draw,
                                  const BlockFn& fn, double& margin, int& redraws) {
            Problem prob = block_problem(p, prefix, draw(), fn);
            margin = kink_margin(prob.fn, prob.inputs);
            for (redraws = 0; margin < guard && redraws < opts.max_redraws; ++redraws) {
                prob = block_problem(p, prefix, draw(), fn);
                margin = kink_margin(prob.fn, prob.inputs);
            }
            return prob;
        };
        auto block = [&](const std::string& name, const std::string& prefix, const std::function<std::vector<Tensor>()>& draw,
                         const BlockFn& fn) {
            double margin = 0;
            int redraws = 0;
            const Problem prob = smooth_problem(prefix, draw, fn, margin, redraws);
            record(name, grad_check(prob.fn, prob.inputs, full), margin, redraws);
        };
        auto composite = [&](const std::string& name, const std::string& prefix,
                             const std::function<std::vector<Tensor>()>& draw, const BlockFn& fn) {
            double margin = 0;
            int redraws = 0;
            const Problem prob = smooth_problem(prefix, draw, fn, margin, redraws);
            record(name + "_sampled", grad_check(prob.fn, prob.inputs, sampled), margin, redraws);
            record(name + "_directional", directional_check(prob.fn, prob.inputs, opts.directions, full), margin, redraws);
        };
        auto features = [&](std::size_t count, std::size_t side) {
            return [&rng, c, count, side] {
                std::vector<Tensor> data;
                for (std::size_t i = 0; i < count; ++i) data.push_back(uniform({1, c, side, side}, rng));
                return data;
            };
        };

        block("channel_attention", dau + ".ca", features(1, 4),
              [&](const ParamBinding& b, std::span<const Var> v) { return blocks::channel_attention(b, dau + ".ca", v[0]); });
        block("spatial_attention", dau + ".sa", features(1, 4),
              [&](const ParamBinding& b, std::span<const Var> v) { return blocks::spatial_attention(b, dau + ".sa", v[0]); });
        block("dau", dau, features(1, 4),
              [&](const ParamBinding& b, std::span<const Var> v) { return blocks::dau(b, dau, v[0]); });
        block("skff", skff, features(2, 4),
              [&](const ParamBinding& b, std::span<const Var> v) { return blocks::skff(b, skff, v); });
        composite("mrb", mrb, features(1, 8),
                  [&](const ParamBinding& b, std::span<const Var> v) { return blocks::mrb(b, mrb, v[0]); });
        composite("network", "", [&rng] { return std::vector<Tensor>{uniform({1, 3, 8, 8}, rng, 0.2, 0.8)}; },
                  [](const ParamBinding& b, std::span<const Var> v) { return forward(b, v[0]); });
    }
    return out;
}

std::string grad_suite_csv(const std::vector<GradSuiteEntry>& entries) {
    std::ostringstream out;
    out << "case,seed,max_rel_error,coords,kink_margin,redraws\n";
    char buf[96];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, ",%.6e,%zu,%.6e,%d", e.max_rel_error, e.coords, e.kink_margin, e.redraws);
        out << e.name << ',' << e.seed << buf << '\n';
    }
    return out.str();
}

}  // namespace tse
