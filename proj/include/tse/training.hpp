#pragma once

// Supervised training of the enhancer on aligned low/high quality pairs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/autodiff.hpp"
#include "tse/model.hpp"
#include "tse/rng.hpp"

namespace tse {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ImagePair {
    Tensor low;   // (1, 3, h, w) in [0, 1]
    Tensor high;  // same dims as low
    std::string id;

    void validate() const;
};

struct TrainConfig {
    int epochs = 40;
    int crop = 128;
    int batch = 4;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double charbonnier_eps = 1e-3;
    std::uint64_t seed = 0;
    /// Written after every epoch when non-empty.
    std::filesystem::path curve_output;
    std::filesystem::path checkpoint_output;

    void validate(const NetConfig& net) const;
};

struct CurveRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_psnr_db = std::numeric_limits<double>::quiet_NaN();
};
using CurveLog = std::vector<CurveRow>;

/// mean(sqrt((pred - target)^2 + eps^2)) as a scalar on the tape.
Var charbonnier_loss(const Var& pred, const Var& target, double eps);
double charbonnier_loss(const Tensor& pred, const Tensor& target, double eps);

double mse(const Tensor& pred, const Tensor& target);
/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Tensor& pred, const Tensor& target, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

/// Same random window cut from low and high. Throws std::invalid_argument when
/// size exceeds either image dimension.
ImagePair random_crop_pair(const ImagePair& pair, int size, Rng& rng);

/// Adam with bias correction; moment buffers keyed by parameter path.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(ModelParams& params, const std::map<std::string, Tensor>& grads);
    std::int64_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

struct Evaluation {
    double loss = 0.0;
    double mse = 0.0;
    double psnr_db = 0.0;
};

class Trainer {
public:
    Trainer(ModelParams params, TrainConfig config);

    /// One optimizer step on a stacked batch of equally sized pairs; returns
    /// the loss before the update.
    double step(const std::vector<ImagePair>& batch);

    /// Full-frame evaluation: frames are reflect-padded to the network's
    /// divisibility, enhanced, and cropped back. PSNR uses the MSE pooled over
    /// every pixel of every pair.
    Evaluation evaluate(const std::vector<ImagePair>& pairs) const;

    const ModelParams& params() const { return params_; }
    std::int64_t global_step() const { return adam_.steps(); }

private:
    ModelParams params_;
    TrainConfig config_;
    Adam adam_;
};

struct TrainResult {
    ModelParams params;
    CurveLog log;
};

using EpochCallback = std::function<void(const CurveRow&)>;

/// Shuffled random-crop mini-batches for config.epochs epochs, evaluating on
/// val_pairs after each epoch.
TrainResult train(const std::vector<ImagePair>& pairs, const std::vector<ImagePair>& val_pairs,
                  const NetConfig& net_config, const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// Header `epoch,train_loss,val_loss,val_psnr_db`, 6 significant digits.
std::string curve_csv(const CurveLog& log);
void write_curve_csv(const std::filesystem::path& path, const CurveLog& log);

struct SyntheticOptions {
    double gain_lo = 0.2;
    double gain_hi = 0.4;
    double gamma_lo = 1.2;
    double gamma_hi = 1.6;
    double noise_sigma = 0.01;
};

/// Deterministic synthetic scenes (smooth gradients plus sign-like discs and
/// squares) paired with darkened, gamma-compressed, noisy copies:
/// low = clamp(gain * high^gamma + noise).
std::vector<ImagePair> make_synthetic_pairs(std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed,
                                            const SyntheticOptions& options = {});

}  // namespace tse
