#include "tse/model.hpp"

#include <cmath>

#include "tse/rng.hpp"

namespace tse {

namespace {

std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

std::string scale_tag(int s) { return "s" + std::to_string(s); }

std::size_t reduced(int channels, int reduction) {
    return static_cast<std::size_t>(std::max(1, channels / reduction));
}

class LayoutBuilder {
public:
    explicit LayoutBuilder(const NetConfig& c) : cfg_(c) {}

    void conv(const std::string& prefix, std::size_t out_c, std::size_t in_c, std::size_t k) {
        const std::size_t fan_in = in_c * k * k;
        specs_.push_back({join(prefix, "weight"), Shape{out_c, in_c, k, k}, fan_in, false});
        specs_.push_back({join(prefix, "bias"), Shape{out_c, 1, 1, 1}, fan_in, true});
    }

    void channel_attention(const std::string& prefix, int c) {
        const std::size_t mid = reduced(c, cfg_.ca_reduction);
        conv(join(prefix, "conv0"), mid, static_cast<std::size_t>(c), 1);
        conv(join(prefix, "conv1"), static_cast<std::size_t>(c), mid, 1);
    }

    void spatial_attention(const std::string& prefix) {
        const std::size_t maps = cfg_.spatial_pooling == SpatialPooling::kMedian ? 1 : 2;
        conv(join(prefix, "conv"), 1, maps, static_cast<std::size_t>(cfg_.sa_kernel));
    }

    void dau(const std::string& prefix, int c) {
        const auto uc = static_cast<std::size_t>(c);
        conv(join(prefix, "body0"), uc, uc, 3);
        conv(join(prefix, "body1"), uc, uc, 3);
        channel_attention(join(prefix, "ca"), c);
        spatial_attention(join(prefix, "sa"));
        conv(join(prefix, "proj"), uc, 2 * uc, 1);
    }

    void skff(const std::string& prefix, int c, int branches) {
        const std::size_t mid = reduced(c, cfg_.ca_reduction);
        const auto uc = static_cast<std::size_t>(c);
        conv(join(prefix, "fuse"), mid, uc, 1);
        for (int b = 0; b < branches; ++b) conv(join(prefix, "select" + std::to_string(b)), uc, mid, 1);
    }

    void resample(const std::string& prefix, int from, int to) {
        int s = from;
        int step = 0;
        while (s != to) {
            const int next = to > s ? s + 1 : s - 1;
            conv(join(prefix, "step" + std::to_string(step)), static_cast<std::size_t>(cfg_.channels_at(next)),
                 static_cast<std::size_t>(cfg_.channels_at(s)), 1);
            s = next;
            ++step;
        }
    }

    void mrb(const std::string& prefix) {
        const int scales = cfg_.n_scales;
        for (int s = 0; s + 1 < scales; ++s) resample(join(prefix, "down" + std::to_string(s)), s, s + 1);
        for (int s = 0; s < scales; ++s) dau(join(prefix, "dau_a." + scale_tag(s)), cfg_.channels_at(s));
        if (scales > 1) {
            for (int to = 0; to < scales; ++to) {
                for (int from = 0; from < scales; ++from) {
                    if (from != to) {
                        resample(join(prefix, "cross." + std::to_string(from) + "to" + std::to_string(to)), from, to);
                    }
                }
                skff(join(prefix, "skff_mid." + scale_tag(to)), cfg_.channels_at(to), scales);
            }
        }
        for (int s = 0; s < scales; ++s) dau(join(prefix, "dau_b." + scale_tag(s)), cfg_.channels_at(s));
        if (scales > 1) {
            for (int from = 1; from < scales; ++from) {
                resample(join(prefix, "gather." + std::to_string(from) + "to0"), from, 0);
            }
            skff(join(prefix, "skff_out"), cfg_.base_channels, scales);
        }
        const auto c = static_cast<std::size_t>(cfg_.base_channels);
        conv(join(prefix, "conv"), c, c, 1);
    }

    void network() {
        const auto c = static_cast<std::size_t>(cfg_.base_channels);
        conv("conv_in", c, 3, 3);
        for (int g = 0; g < cfg_.n_rrg; ++g) {
            const std::string group = "rrg" + std::to_string(g);
            for (int m = 0; m < cfg_.n_mrb_per_rrg; ++m) mrb(join(group, "mrb" + std::to_string(m)));
            conv(join(group, "conv"), c, c, 3);
        }
        conv("conv_out", 3, c, 3);
    }

    std::vector<ParamSpec> take() { return std::move(specs_); }

private:
    const NetConfig& cfg_;
    std::vector<ParamSpec> specs_;
};

}  // namespace

void NetConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("NetConfig: " + msg); };
    if (n_rrg < 1) fail("n_rrg must be >= 1");
    if (n_mrb_per_rrg < 1) fail("n_mrb_per_rrg must be >= 1");
    if (n_scales < 1 || n_scales > 6) fail("n_scales must be in 1..6");
    if (base_channels < 1) fail("base_channels must be >= 1");
    if (ca_reduction < 1) fail("ca_reduction must be >= 1");
    if (base_channels < ca_reduction) fail("base_channels must be >= ca_reduction");
    if (sa_kernel < 1 || sa_kernel % 2 == 0) fail("sa_kernel must be a positive odd integer");
}

std::vector<ParamSpec> param_layout(const NetConfig& config) {
    config.validate();
    LayoutBuilder b(config);
    b.network();
    return b.take();
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [path, t] : tensors) total += t.numel();
    return total;
}

Tensor& ModelParams::at(const std::string& path) {
    auto it = tensors.find(path);
    if (it == tensors.end()) throw std::out_of_range("no parameter at path '" + path + "'");
    return it->second;
}

const Tensor& ModelParams::at(const std::string& path) const {
    auto it = tensors.find(path);
    if (it == tensors.end()) throw std::out_of_range("no parameter at path '" + path + "'");
    return it->second;
}

ModelParams init_model(const NetConfig& config) {
    ModelParams params{config, {}};
    for (const ParamSpec& spec : param_layout(config)) {
        Tensor t(spec.shape);
        if (!spec.bias) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
            const std::uint64_t stream = hash_path(spec.path);
            for (std::size_t i = 0; i < t.numel(); ++i) {
                t[i] = (2.0 * counter_uniform(config.seed, stream, i) - 1.0) * bound;
            }
        }
        params.tensors.emplace(spec.path, std::move(t));
    }
    return params;
}

ParamBinding::ParamBinding(Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), config_(params.config) {
    for (const auto& [path, t] : params.tensors) {
        vars_.emplace(path, trainable ? tape.leaf(t) : tape.constant(t));
    }
}

ParamBinding::ParamBinding(const NetConfig& config, std::map<std::string, Var> vars)
    : tape_(vars.empty() ? nullptr : &vars.begin()->second.tape()), config_(config), vars_(std::move(vars)) {}

const Var& ParamBinding::operator[](const std::string& path) const {
    auto it = vars_.find(path);
    if (it == vars_.end()) throw std::out_of_range("model has no parameter '" + path + "'");
    ++reads_[path];
    return it->second;
}

void check_resolution(const NetConfig& config, const Shape& s) {
    const std::size_t d = config.resolution_divisor();
    if (s.h % d != 0 || s.w % d != 0 || s.h == 0 || s.w == 0) {
        throw ResolutionError("input " + s.str() + ": height and width must be non-zero multiples of " +
                              std::to_string(d) + " for n_scales=" + std::to_string(config.n_scales));
    }
}

namespace blocks {

Var conv(const ParamBinding& p, const std::string& prefix, const Var& x) {
    const Var& w = p[join(prefix, "weight")];
    const Var& b = p[join(prefix, "bias")];
    const int pad = static_cast<int>((w.shape().h - 1) / 2);
    return ops::conv2d(x, w, b, 1, pad);
}

Var channel_gate(const ParamBinding& p, const std::string& prefix, const Var& x) {
    const Var context = ops::global_pool(x, PoolMode::kAvg);
    const Var hidden = ops::relu(conv(p, join(prefix, "conv0"), context));
    return ops::sigmoid(conv(p, join(prefix, "conv1"), hidden));
}

Var channel_attention(const ParamBinding& p, const std::string& prefix, const Var& x) {
    return ops::mul(x, channel_gate(p, prefix, x));
}

Var spatial_gate(const ParamBinding& p, const std::string& prefix, const Var& x) {
    Var pooled;
    if (p.config().spatial_pooling == SpatialPooling::kMedian) {
        pooled = ops::median_pool_channels(x);
    } else {
        const Var maps[] = {ops::mean_pool_channels(x), ops::max_pool_channels(x)};
        pooled = ops::concat_channels(maps);
    }
    return ops::sigmoid(conv(p, join(prefix, "conv"), pooled));
}

Var spatial_attention(const ParamBinding& p, const std::string& prefix, const Var& x) {
    return ops::mul(x, spatial_gate(p, prefix, x));
}

Var dau(const ParamBinding& p, const std::string& prefix, const Var& x) {
    const Var features = conv(p, join(prefix, "body1"), ops::relu(conv(p, join(prefix, "body0"), x)));
    const Var attended[] = {channel_attention(p, join(prefix, "ca"), features),
                            spatial_attention(p, join(prefix, "sa"), features)};
    return ops::add(x, conv(p, join(prefix, "proj"), ops::concat_channels(attended)));
}

std::vector<Var> skff_weights(const ParamBinding& p, const std::string& prefix, std::span<const Var> branches) {
    if (branches.size() < 2) throw ShapeError("skff: needs at least 2 branches, got " + std::to_string(branches.size()));
    Var total = branches[0];
    for (std::size_t i = 1; i < branches.size(); ++i) {
        if (branches[i].shape() != branches[0].shape()) throw_shape_error("skff branches", branches[0].shape(), branches[i].shape());
        total = ops::add(total, branches[i]);
    }
    const Var z = ops::relu(conv(p, join(prefix, "fuse"), ops::global_pool(total, PoolMode::kAvg)));
    std::vector<Var> logits;
    logits.reserve(branches.size());
    for (std::size_t i = 0; i < branches.size(); ++i) logits.push_back(conv(p, join(prefix, "select" + std::to_string(i)), z));
    return ops::softmax_over_branches(logits);
}

Var skff(const ParamBinding& p, const std::string& prefix, std::span<const Var> branches) {
    const std::vector<Var> weights = skff_weights(p, prefix, branches);
    Var out = ops::mul(branches[0], weights[0]);
    for (std::size_t i = 1; i < branches.size(); ++i) out = ops::add(out, ops::mul(branches[i], weights[i]));
    return out;
}

Var resample(const ParamBinding& p, const std::string& prefix, const Var& x, int from, int to) {
    Var cur = x;
    int s = from;
    int step = 0;
    while (s != to) {
        const bool down = to > s;
        cur = ops::resize_bilinear(cur, down ? kernels::ResizeRatio{1, 2} : kernels::ResizeRatio{2, 1});
        cur = conv(p, join(prefix, "step" + std::to_string(step)), cur);
        s += down ? 1 : -1;
        ++step;
    }
    return cur;
}

Var mrb(const ParamBinding& p, const std::string& prefix, const Var& x) {
    const NetConfig& cfg = p.config();
    check_resolution(cfg, x.shape());
    if (x.shape().c != static_cast<std::size_t>(cfg.base_channels)) {
        throw ShapeError("mrb: expected " + std::to_string(cfg.base_channels) + " channels, got " + x.shape().str());
    }
    const int scales = cfg.n_scales;
    std::vector<Var> streams{x};
    for (int s = 0; s + 1 < scales; ++s) {
        streams.push_back(resample(p, join(prefix, "down" + std::to_string(s)), streams.back(), s, s + 1));
    }
    for (int s = 0; s < scales; ++s) streams[s] = dau(p, join(prefix, "dau_a." + scale_tag(s)), streams[s]);
    if (scales > 1) {
        std::vector<Var> fused;
        for (int to = 0; to < scales; ++to) {
            std::vector<Var> branches;
            for (int from = 0; from < scales; ++from) {
                branches.push_back(from == to ? streams[from]
                                              : resample(p, join(prefix, "cross." + std::to_string(from) + "to" + std::to_string(to)),
                                                         streams[from], from, to));
            }
            fused.push_back(skff(p, join(prefix, "skff_mid." + scale_tag(to)), branches));
        }
        streams = std::move(fused);
    }
    for (int s = 0; s < scales; ++s) streams[s] = dau(p, join(prefix, "dau_b." + scale_tag(s)), streams[s]);
    Var merged = streams[0];
    if (scales > 1) {
        std::vector<Var> branches{streams[0]};
        for (int from = 1; from < scales; ++from) {
            branches.push_back(resample(p, join(prefix, "gather." + std::to_string(from) + "to0"), streams[from], from, 0));
        }
        merged = skff(p, join(prefix, "skff_out"), branches);
    }
    return ops::add(x, conv(p, join(prefix, "conv"), merged));
}

Var rrg(const ParamBinding& p, const std::string& prefix, const Var& x) {
    Var cur = x;
    for (int m = 0; m < p.config().n_mrb_per_rrg; ++m) cur = mrb(p, join(prefix, "mrb" + std::to_string(m)), cur);
    return ops::add(x, conv(p, join(prefix, "conv"), cur));
}

}  // namespace blocks

Var forward(const ParamBinding& p, const Var& image) {
    const NetConfig& cfg = p.config();
    if (image.shape().c != 3) throw ShapeError("forward: expected 3-channel image, got " + image.shape().str());
    check_resolution(cfg, image.shape());
    Var features = blocks::conv(p, "conv_in", image);
    for (int g = 0; g < cfg.n_rrg; ++g) features = blocks::rrg(p, "rrg" + std::to_string(g), features);
    const Var residual = blocks::conv(p, "conv_out", features);
    return ops::clamp(ops::add(image, residual), 0.0, 1.0);
}

Tensor enhance(const ModelParams& params, const Tensor& image) {
    Tape tape(Tape::Mode::kInference);
    ParamBinding binding(tape, params, false);
    return forward(binding, tape.constant(image)).value();
}

}  // namespace tse
