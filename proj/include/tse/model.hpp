#pragma once

// Modified MIRNet enhancer: dual attention units whose spatial branch pools
// with a channel-wise median, selective kernel feature fusion, multi-scale
// residual blocks and recursive residual groups.
//
// Parameters live in ModelParams under stable dotted paths. param_layout()
// enumerates them from a NetConfig; the block functions read exactly those
// paths through a ParamBinding, so the two must stay in step (the test suite
// checks that every path is read exactly once per forward pass).

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tse/autodiff.hpp"
#include "tse/tensor.hpp"

namespace tse {

class ResolutionError : public ShapeError {
public:
    using ShapeError::ShapeError;
};

/// Pooling feeding the spatial-attention conv. kMedian is the modified block;
/// kAvgMax is the original GAP+GMP pair, kept for comparison runs.
enum class SpatialPooling : std::uint8_t { kMedian = 0, kAvgMax = 1 };

struct NetConfig {
    int n_rrg = 3;
    int n_mrb_per_rrg = 2;
    int n_scales = 3;
    int base_channels = 64;
    int sa_kernel = 5;
    int ca_reduction = 4;
    std::uint64_t seed = 0;
    SpatialPooling spatial_pooling = SpatialPooling::kMedian;

    /// Full-size defaults.
    static NetConfig full() { return NetConfig{}; }
    /// Small configuration used by tests and quick experiments.
    static NetConfig test() { return NetConfig{1, 1, 2, 8, 5, 4, 0, SpatialPooling::kMedian}; }

    void validate() const;
    /// Input height and width must be multiples of this.
    std::size_t resolution_divisor() const { return std::size_t{1} << (n_scales - 1); }
    int channels_at(int scale) const { return base_channels << scale; }

    bool operator==(const NetConfig&) const = default;
};

struct ParamSpec {
    std::string path;
    Shape shape;
    std::size_t fan_in = 0;
    bool bias = false;
};

std::vector<ParamSpec> param_layout(const NetConfig& config);

struct ModelParams {
    NetConfig config;
    std::map<std::string, Tensor> tensors;

    std::size_t parameter_count() const;
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
};

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from a
/// counter-based generator keyed on (seed, path, element); biases start at zero.
ModelParams init_model(const NetConfig& config);

/// Exposes ModelParams as Vars on a tape (leaves when trainable) and records
/// which paths were read.
class ParamBinding {
public:
    ParamBinding(Tape& tape, const ModelParams& params, bool trainable);
    /// Binds caller-owned Vars, e.g. a subset of parameters under gradient check.
    ParamBinding(const NetConfig& config, std::map<std::string, Var> vars);

    const NetConfig& config() const { return config_; }
    Tape& tape() const { return *tape_; }
    const Var& operator[](const std::string& path) const;
    const std::map<std::string, Var>& vars() const { return vars_; }
    const std::map<std::string, std::size_t>& reads() const { return reads_; }

private:
    Tape* tape_;
    NetConfig config_;
    std::map<std::string, Var> vars_;
    mutable std::map<std::string, std::size_t> reads_;
};

namespace blocks {

/// prefix.weight / prefix.bias convolution with "same" padding for odd kernels.
Var conv(const ParamBinding& p, const std::string& prefix, const Var& x);
/// Per-channel gate sigmoid(conv1(relu(conv0(GAP(x))))), shape (n, c, 1, 1).
Var channel_gate(const ParamBinding& p, const std::string& prefix, const Var& x);
Var channel_attention(const ParamBinding& p, const std::string& prefix, const Var& x);
/// Per-position gate sigmoid(conv(pool(x))), shape (n, 1, h, w).
Var spatial_gate(const ParamBinding& p, const std::string& prefix, const Var& x);
Var spatial_attention(const ParamBinding& p, const std::string& prefix, const Var& x);
Var dau(const ParamBinding& p, const std::string& prefix, const Var& x);
/// Per-branch (n, c, 1, 1) selection weights; they sum to 1 across branches.
std::vector<Var> skff_weights(const ParamBinding& p, const std::string& prefix, std::span<const Var> branches);
Var skff(const ParamBinding& p, const std::string& prefix, std::span<const Var> branches);
/// Moves a stream from scale `from` to scale `to` (bilinear step + 1x1 conv per octave).
Var resample(const ParamBinding& p, const std::string& prefix, const Var& x, int from, int to);
Var mrb(const ParamBinding& p, const std::string& prefix, const Var& x);
Var rrg(const ParamBinding& p, const std::string& prefix, const Var& x);

}  // namespace blocks

/// Full enhancer: clamp(image + conv_out(groups(conv_in(image))), 0, 1).
Var forward(const ParamBinding& p, const Var& image);

/// Inference-only forward pass (no tape recording).
Tensor enhance(const ModelParams& params, const Tensor& image);

void check_resolution(const NetConfig& config, const Shape& s);

}  // namespace tse
