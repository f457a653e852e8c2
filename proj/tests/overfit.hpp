#pragma once

// Single-pair overfit run of the test-size network, shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <vector>

#include "tse/training.hpp"

namespace tse::testing {

struct OverfitRun {
    std::vector<double> losses;  // losses[i] is the training loss before update i; the last entry follows the final update
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double final_psnr_db = 0.0;
};

inline OverfitRun run_overfit(int steps = 200) {
    const auto pair = make_synthetic_pairs(1, 32, 32, 1, SyntheticOptions{0.5, 0.5, 1.0, 1.0, 0.0});
    NetConfig net = NetConfig::test();
    net.seed = 1;
    TrainConfig tc;
    tc.crop = 32;
    tc.batch = 1;
    tc.lr = 1.5e-3;
    Trainer trainer(init_model(net), tc);
    OverfitRun run;
    for (int i = 0; i < steps; ++i) run.losses.push_back(trainer.step(pair));
    const Evaluation e = trainer.evaluate(pair);
    run.losses.push_back(e.loss);
    run.initial_loss = run.losses.front();
    run.final_loss = e.loss;
    run.final_psnr_db = e.psnr_db;
    return run;
}

/// True when loss[i + window] <= loss[i] for every i.
inline bool window_non_increasing(const std::vector<double>& losses, std::size_t window) {
    for (std::size_t i = 0; i + window < losses.size(); ++i)
        if (losses[i + window] > losses[i]) return false;
    return true;
}

/// Largest relative step-to-step increase, loss[i+1] / loss[i] - 1.
inline double max_uptick(const std::vector<double>& losses) {
    double worst = 0.0;
    for (std::size_t i = 1; i < losses.size(); ++i) worst = std::max(worst, losses[i] / losses[i - 1] - 1.0);
    return worst;
}

}  // namespace tse::testing
