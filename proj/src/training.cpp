#include "tse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "tse/checkpoint.hpp"
#include "tse/image_ops.hpp"

namespace tse {

void ImagePair::validate() const {
    if (low.shape() != high.shape()) throw_shape_error("image pair '" + id + "'", low.shape(), high.shape());
    if (low.shape().n != 1 || low.shape().c != 3) {
        throw ShapeError("image pair '" + id + "' must be (1,3,h,w), got " + low.shape().str());
    }
    for (const Tensor* t : {&low, &high}) {
        for (double v : t->values()) {
            if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image pair '" + id + "' has values outside [0,1]");
        }
    }
}

void TrainConfig::validate(const NetConfig& net) const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (crop < 1 || static_cast<std::size_t>(crop) % net.resolution_divisor() != 0) {
        throw ConfigError("crop " + std::to_string(crop) + " must be a positive multiple of " +
                          std::to_string(net.resolution_divisor()));
    }
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(charbonnier_eps > 0.0)) throw ConfigError("charbonnier_eps must be > 0");
}

Var charbonnier_loss(const Var& pred, const Var& target, double eps) {
    if (pred.shape() != target.shape()) throw_shape_error("charbonnier_loss", pred.shape(), target.shape());
    const auto count = static_cast<double>(pred.value().numel());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.value().numel(); ++i) {
        const double d = pred.value()[i] - target.value()[i];
        total += std::sqrt(d * d + eps * eps);
    }
    const Var inputs[] = {pred, target};
    return pred.tape().record(Tensor(Shape{1, 1, 1, 1}, total / count), inputs, [pred, target, eps, count](const Tensor& g) {
        Tensor gp(pred.shape());
        for (std::size_t i = 0; i < gp.numel(); ++i) {
            const double d = pred.value()[i] - target.value()[i];
            gp[i] = g[0] * d / std::sqrt(d * d + eps * eps) / count;
        }
        pred.accumulate_grad(gp);
        if (target.requires_grad()) {
            for (double& v : gp.values()) v = -v;
            target.accumulate_grad(gp);
        }
    });
}

double charbonnier_loss(const Tensor& pred, const Tensor& target, double eps) {
    Tape tape(Tape::Mode::kInference);
    return charbonnier_loss(tape.constant(pred), tape.constant(target), eps).value()[0];
}

double mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) throw_shape_error("mse", pred.shape(), target.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

double psnr_from_mse(double m, double peak) {
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

double psnr(const Tensor& pred, const Tensor& target, double peak) { return psnr_from_mse(mse(pred, target), peak); }

ImagePair random_crop_pair(const ImagePair& pair, int size, Rng& rng) {
    const Shape s = pair.low.shape();
    if (pair.high.shape() != s) throw_shape_error("random_crop_pair", s, pair.high.shape());
    if (size < 1 || static_cast<std::size_t>(size) > std::min(s.h, s.w)) {
        throw std::invalid_argument("crop size " + std::to_string(size) + " does not fit image '" + pair.id + "' " +
                                    s.str());
    }
    const auto side = static_cast<std::size_t>(size);
    const std::size_t top = rng.below(s.h - side + 1);
    const std::size_t left = rng.below(s.w - side + 1);
    return ImagePair{crop_spatial(pair.low, top, left, side, side), crop_spatial(pair.high, top, left, side, side),
                     pair.id};
}

void Adam::step(ModelParams& params, const std::map<std::string, Tensor>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [path, g] : grads) {
        Tensor& p = params.at(path);
        auto [mit, m_new] = m_.try_emplace(path, Tensor(p.shape()));
        auto [vit, v_new] = v_.try_emplace(path, Tensor(p.shape()));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

Trainer::Trainer(ModelParams params, TrainConfig config)
    : params_(std::move(params)),
      config_(std::move(config)),
      adam_(config_.lr, config_.beta1, config_.beta2, config_.adam_eps) {}

double Trainer::step(const std::vector<ImagePair>& batch) {
    std::vector<Tensor> lows, highs;
    for (const ImagePair& p : batch) {
        lows.push_back(p.low);
        highs.push_back(p.high);
    }
    Tape tape;
    ParamBinding binding(tape, params_, true);
    const Var pred = forward(binding, tape.constant(stack_batch(lows)));
    const Var loss = charbonnier_loss(pred, tape.constant(stack_batch(highs)), config_.charbonnier_eps);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw std::domain_error("loss is " + std::to_string(value));
    tape.backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [path, var] : binding.vars()) grads.emplace(path, tape.grad(var));
    for (const auto& [path, g] : grads) {
        if (!g.all_finite()) throw std::domain_error("non-finite gradient for " + path);
    }
    adam_.step(params_, grads);
    return value;
}

Evaluation Trainer::evaluate(const std::vector<ImagePair>& pairs) const {
    Evaluation e;
    if (pairs.empty()) {
        e.loss = e.mse = e.psnr_db = std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    double sq_sum = 0.0;
    double count = 0.0;
    double loss_sum = 0.0;
    for (const ImagePair& p : pairs) {
        const Shape s = p.low.shape();
        const Padding pad = centered_padding(s, params_.config.resolution_divisor());
        const Tensor out = crop_spatial(enhance(params_, reflect_pad(p.low, pad)), pad.top, pad.left, s.h, s.w);
        loss_sum += charbonnier_loss(out, p.high, config_.charbonnier_eps);
        const auto n = static_cast<double>(out.numel());
        sq_sum += mse(out, p.high) * n;
        count += n;
    }
    e.loss = loss_sum / static_cast<double>(pairs.size());
    e.mse = sq_sum / count;
    e.psnr_db = psnr_from_mse(e.mse);
    return e;
}

TrainResult train(const std::vector<ImagePair>& pairs, const std::vector<ImagePair>& val_pairs,
                  const NetConfig& net_config, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
    cfg.validate(net_config);
    for (const ImagePair& p : pairs) p.validate();
    for (const ImagePair& p : val_pairs) p.validate();

    Trainer trainer(init_model(net_config), cfg);
    Rng rng(cfg.seed);
    TrainResult result;
    std::vector<std::size_t> order(pairs.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::vector<ImagePair> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(random_crop_pair(pairs[order[i]], cfg.crop, rng));
            try {
                loss_sum += trainer.step(batch);
            } catch (const std::domain_error& e) {
                throw TrainingError("non-finite value at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(steps + 1) + " (global step " +
                                    std::to_string(trainer.global_step() + 1) + "): " + e.what());
            }
            ++steps;
        }
        const Evaluation val = trainer.evaluate(val_pairs);
        result.log.push_back(CurveRow{epoch, loss_sum / steps, val.loss, val.psnr_db});
        if (!cfg.curve_output.empty()) write_curve_csv(cfg.curve_output, result.log);
        if (!cfg.checkpoint_output.empty()) save_checkpoint(trainer.params(), cfg.checkpoint_output);
        if (on_epoch) on_epoch(result.log.back());
    }
    result.params = trainer.params();
    return result;
}

std::string curve_csv(const CurveLog& log) {
    std::string out = "epoch,train_loss,val_loss,val_psnr_db\n";
    char buf[128];
    for (const CurveRow& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss, r.val_loss, r.val_psnr_db);
        out += buf;
    }
    return out;
}

void write_curve_csv(const std::filesystem::path& path, const CurveLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write curve log " + path.string());
    out << curve_csv(log);
}

std::vector<ImagePair> make_synthetic_pairs(std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed,
                                            const SyntheticOptions& options) {
    std::vector<ImagePair> pairs;
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        Tensor high(Shape{1, 3, h, w});
        double base[3], gx[3], gy[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = rng.uniform(0.3, 0.7);
            gx[c] = rng.uniform(-0.3, 0.3);
            gy[c] = rng.uniform(-0.3, 0.3);
        }
        for (int c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double u = static_cast<double>(x) / static_cast<double>(w) - 0.5;
                    const double v = static_cast<double>(y) / static_cast<double>(h) - 0.5;
                    high.at(0, static_cast<std::size_t>(c), y, x) = base[c] + gx[c] * u + gy[c] * v;
                }
        const std::size_t shapes = 1 + rng.below(3);
        for (std::size_t s = 0; s < shapes; ++s) {
            const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(w);
            const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(h);
            const double r = rng.uniform(0.1, 0.25) * static_cast<double>(std::min(h, w));
            const bool disc = rng.uniform() < 0.5;
            double color[3];
            for (double& c : color) c = rng.uniform() < 0.5 ? rng.uniform(0.75, 0.95) : rng.uniform(0.05, 0.25);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx;
                    const double dy = static_cast<double>(y) + 0.5 - cy;
                    const bool inside = disc ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= r;
                    if (inside) {
                        for (std::size_t c = 0; c < 3; ++c) high.at(0, c, y, x) = color[c];
                    }
                }
        }
        for (double& v : high.values()) v = std::clamp(v, 0.0, 1.0);

        Tensor low(high.shape());
        const double gain = rng.uniform(options.gain_lo, options.gain_hi);
        const double gamma = rng.uniform(options.gamma_lo, options.gamma_hi);
        for (std::size_t i = 0; i < low.numel(); ++i) {
            const double noise = options.noise_sigma > 0.0 ? options.noise_sigma * rng.normal() : 0.0;
            low[i] = std::clamp(gain * std::pow(high[i], gamma) + noise, 0.0, 1.0);
        }
        pairs.push_back(ImagePair{std::move(low), std::move(high), "synthetic_" + std::to_string(k)});
    }
    return pairs;
}

}  // namespace tse
