#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "model_fixtures.hpp"
#include "test_util.hpp"
#include "tse/checkpoint.hpp"
#include "tse/model.hpp"

namespace tse {
namespace {

using testing::make_block_problem;
using testing::random_tensor;
using testing::randomized_model;
using testing::uniform_tensor;

const std::string kDau = "rrg0.mrb0.dau_a.s0";
const std::string kSkff = "rrg0.mrb0.skff_mid.s0";

void zero_conv(ModelParams& p, const std::string& prefix) {
    for (double& v : p.at(prefix + ".weight").values()) v = 0.0;
    for (double& v : p.at(prefix + ".bias").values()) v = 0.0;
}

// Weight counts written out per block, independent of the layout builder.
std::size_t conv_count(std::size_t out, std::size_t in, std::size_t k) { return out * in * k * k + out; }

std::size_t expected_count(std::size_t c, std::size_t scales, std::size_t k, std::size_t r, std::size_t rrg,
                           std::size_t mrb) {
    auto ca = [&](std::size_t ch) { return conv_count(ch / r, ch, 1) + conv_count(ch, ch / r, 1); };
    auto dau = [&](std::size_t ch) {
        return 2 * conv_count(ch, ch, 3) + ca(ch) + conv_count(1, 1, k) + conv_count(ch, 2 * ch, 1);
    };
    auto skff = [&](std::size_t ch, std::size_t l) { return conv_count(ch / r, ch, 1) + l * conv_count(ch, ch / r, 1); };
    auto ch_at = [&](std::size_t s) { return c << s; };
    // Resampling between adjacent scales: one 1x1 conv per octave.
    auto hop = [&](std::size_t from, std::size_t to) {
        std::size_t total = 0;
        while (from != to) {
            const std::size_t next = to > from ? from + 1 : from - 1;
            total += conv_count(ch_at(next), ch_at(from), 1);
            from = next;
        }
        return total;
    };
    std::size_t block = conv_count(c, c, 1);
    for (std::size_t s = 0; s + 1 < scales; ++s) block += hop(s, s + 1);
    for (std::size_t s = 0; s < scales; ++s) block += 2 * dau(ch_at(s));
    if (scales > 1) {
        for (std::size_t to = 0; to < scales; ++to) {
            for (std::size_t from = 0; from < scales; ++from)
                if (from != to) block += hop(from, to);
            block += skff(ch_at(to), scales);
        }
        for (std::size_t from = 1; from < scales; ++from) block += hop(from, 0);
        block += skff(c, scales);
    }
    const std::size_t group = mrb * block + conv_count(c, c, 3);
    return conv_count(c, 3, 3) + rrg * group + conv_count(3, c, 3);
}

TEST(NetConfig, ValidationRejectsBadValues) {
    NetConfig c = NetConfig::test();
    EXPECT_NO_THROW(c.validate());
    c.sa_kernel = 4;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig::test();
    c.base_channels = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetConfig::test();
    c.n_scales = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InitModel, ParameterCountMatchesClosedForm) {
    NetConfig c = NetConfig::test();
    EXPECT_EQ(init_model(c).parameter_count(), 15447u);
    EXPECT_EQ(init_model(c).parameter_count(), expected_count(8, 2, 5, 4, 1, 1));
    c.n_scales = 3;
    c.n_mrb_per_rrg = 2;
    EXPECT_EQ(init_model(c).parameter_count(), expected_count(8, 3, 5, 4, 1, 2));
    EXPECT_EQ(init_model(NetConfig::full()).parameter_count(), expected_count(64, 3, 5, 4, 3, 2));
}

TEST(InitModel, DeterministicAndBiasesZero) {
    const ModelParams a = init_model(NetConfig::test());
    const ModelParams b = init_model(NetConfig::test());
    EXPECT_EQ(serialize(a), serialize(b));
    NetConfig other = NetConfig::test();
    other.seed = 1;
    EXPECT_NE(serialize(a), serialize(init_model(other)));
    for (const auto& [path, t] : a.tensors) {
        if (path.ends_with("bias")) {
            for (double v : t.values()) EXPECT_EQ(v, 0.0) << path;
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape().c * t.shape().h * t.shape().w));
            for (double v : t.values()) EXPECT_LE(std::abs(v), bound) << path;
        }
    }
}

TEST(InitModel, PathsAreUniqueAndEachReadOncePerForward) {
    const ModelParams p = init_model(NetConfig::test());
    const auto layout = param_layout(p.config);
    std::set<std::string> unique;
    for (const auto& spec : layout) EXPECT_TRUE(unique.insert(spec.path).second) << spec.path;
    EXPECT_EQ(unique.size(), p.tensors.size());

    Tape tape(Tape::Mode::kInference);
    ParamBinding binding(tape, p, false);
    Rng rng(1);
    forward(binding, tape.constant(uniform_tensor({1, 3, 8, 8}, rng, 0, 1)));
    EXPECT_EQ(binding.reads().size(), p.tensors.size());
    for (const auto& [path, count] : binding.reads()) EXPECT_EQ(count, 1u) << path;
}

TEST(InitModel, SingleScaleDegeneratesToStackedDaus) {
    NetConfig c = NetConfig::test();
    c.n_scales = 1;
    const ModelParams p = init_model(c);
    std::set<std::string> blocks;
    for (const auto& [path, t] : p.tensors) {
        if (path.rfind("rrg0.mrb0.", 0) == 0) {
            const std::string rest = path.substr(10);
            blocks.insert(rest.substr(0, rest.find('.', rest.find('.') + 1)));
        }
    }
    EXPECT_EQ(blocks, (std::set<std::string>{"conv.weight", "conv.bias", "dau_a.s0", "dau_b.s0"}));
}

TEST(ChannelAttention, ZeroSecondConvGivesHalf) {
    ModelParams p = randomized_model(NetConfig::test(), 3);
    zero_conv(p, kDau + ".ca.conv1");
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(2);
    const Var x = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    const Var y = blocks::channel_attention(b, kDau + ".ca", x);
    for (std::size_t i = 0; i < x.value().numel(); ++i) EXPECT_EQ(y.value()[i], 0.5 * x.value()[i]);
}

TEST(ChannelAttention, ZeroInputGivesZeroAndGateIsSpatiallyUniform) {
    const ModelParams p = randomized_model(NetConfig::test(), 4);
    Tape tape;
    ParamBinding b(tape, p, false);
    const Var zero = tape.constant(Tensor(Shape{1, 8, 4, 4}));
    const Var z = blocks::channel_attention(b, kDau + ".ca", zero);
    for (double v : z.value().values()) EXPECT_EQ(v, 0.0);

    Rng rng(5);
    const Var x = tape.constant(uniform_tensor({2, 8, 4, 4}, rng, 0.5, 1.5));
    const Var y = blocks::channel_attention(b, kDau + ".ca", x);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 8; ++c) {
            const double ratio = y.value().at(n, c, 0, 0) / x.value().at(n, c, 0, 0);
            EXPECT_GT(ratio, 0.0);
            EXPECT_LT(ratio, 1.0);
            for (std::size_t h = 0; h < 4; ++h)
                for (std::size_t w = 0; w < 4; ++w)
                    EXPECT_NEAR(y.value().at(n, c, h, w) / x.value().at(n, c, h, w), ratio, 1e-12);
        }
}

TEST(SpatialAttention, ZeroConvGivesHalf) {
    ModelParams p = randomized_model(NetConfig::test(), 6);
    zero_conv(p, kDau + ".sa.conv");
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(7);
    const Var x = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    const Var y = blocks::spatial_attention(b, kDau + ".sa", x);
    for (std::size_t i = 0; i < x.value().numel(); ++i) EXPECT_EQ(y.value()[i], 0.5 * x.value()[i]);
}

TEST(SpatialAttention, ChannelConstantInputGivesThatMap) {
    Tape tape;
    Rng rng(8);
    const Tensor map = random_tensor({1, 1, 4, 4}, rng);
    Tensor x(Shape{1, 5, 4, 4});
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t i = 0; i < 16; ++i) x[c * 16 + i] = map[i];
    const Var m = ops::median_pool_channels(tape.constant(x));
    EXPECT_EQ(m.value(), map);
}

TEST(SpatialAttention, MedianGateIgnoresSingleChannelOutlier) {
    const ModelParams p = randomized_model(NetConfig::test(), 9);
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({1, 8, 4, 4}, rng);
        const std::size_t h = rng.below(4), w = rng.below(4);
        // Perturb a channel already above the upper median so it cannot cross it.
        std::vector<std::pair<double, std::size_t>> vals;
        for (std::size_t c = 0; c < 8; ++c) vals.push_back({x.at(0, c, h, w), c});
        std::sort(vals.begin(), vals.end());
        const std::size_t victim = vals[5 + rng.below(3)].second;

        Tape tape;
        ParamBinding b(tape, p, false);
        const Var before = blocks::spatial_gate(b, kDau + ".sa", tape.constant(x));
        x.at(0, victim, h, w) += 1000.0;
        const Var after = blocks::spatial_gate(b, kDau + ".sa", tape.constant(x));
        EXPECT_EQ(before.value(), after.value());
    }
}

TEST(SpatialAttention, AvgMaxVariantIsSensitiveToOutliers) {
    NetConfig c = NetConfig::test();
    c.spatial_pooling = SpatialPooling::kAvgMax;
    const ModelParams p = randomized_model(c, 9);
    EXPECT_EQ(p.at(kDau + ".sa.conv.weight").shape(), (Shape{1, 2, 5, 5}));
    Rng rng(11);
    Tensor x = random_tensor({1, 8, 4, 4}, rng);
    Tape tape;
    ParamBinding b(tape, p, false);
    const Var before = blocks::spatial_gate(b, kDau + ".sa", tape.constant(x));
    x.at(0, 3, 1, 1) += 1000.0;
    const Var after = blocks::spatial_gate(b, kDau + ".sa", tape.constant(x));
    EXPECT_NE(before.value(), after.value());
}

TEST(Dau, ZeroProjectionIsIdentityAndZeroInputStaysZero) {
    ModelParams p = randomized_model(NetConfig::test(), 12);
    zero_conv(p, kDau + ".proj");
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(13);
    const Var x = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    EXPECT_EQ(blocks::dau(b, kDau, x).value(), x.value());

    const ModelParams fresh = init_model(NetConfig::test());
    ParamBinding fb(tape, fresh, false);
    const Var zero = tape.constant(Tensor(Shape{1, 8, 4, 4}));
    for (double v : blocks::dau(fb, kDau, zero).value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Dau, ChannelMismatchIsShapeError) {
    const ModelParams p = init_model(NetConfig::test());
    Tape tape;
    ParamBinding b(tape, p, false);
    EXPECT_THROW(blocks::dau(b, kDau, tape.constant(Tensor(Shape{1, 4, 4, 4}))), ShapeError);
}

TEST(Skff, IdenticalBranchesPassThrough) {
    const ModelParams p = randomized_model(NetConfig::test(), 14);
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(15);
    const Var x = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    const Var branches[] = {x, x};
    const Var y = blocks::skff(b, kSkff, branches);
    for (std::size_t i = 0; i < x.value().numel(); ++i) EXPECT_NEAR(y.value()[i], x.value()[i], 1e-15);
}

TEST(Skff, ZeroSelectGivesMean) {
    ModelParams p = randomized_model(NetConfig::test(), 16);
    zero_conv(p, kSkff + ".select0");
    zero_conv(p, kSkff + ".select1");
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(17);
    const Var a = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    const Var c = tape.constant(random_tensor({1, 8, 4, 4}, rng));
    const Var branches[] = {a, c};
    const Var y = blocks::skff(b, kSkff, branches);
    for (std::size_t i = 0; i < y.value().numel(); ++i) EXPECT_EQ(y.value()[i], 0.5 * a.value()[i] + 0.5 * c.value()[i]);
}

TEST(Skff, ConvexCombinationOfThreeBranches) {
    NetConfig cfg = NetConfig::test();
    cfg.n_scales = 3;
    const ModelParams p = randomized_model(cfg, 18);
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(19);
    std::vector<Var> branches;
    for (int i = 0; i < 3; ++i) branches.push_back(tape.constant(random_tensor({2, 8, 4, 4}, rng, -3, 3)));
    const auto weights = blocks::skff_weights(b, kSkff, branches);
    for (std::size_t i = 0; i < weights[0].value().numel(); ++i) {
        EXPECT_NEAR(weights[0].value()[i] + weights[1].value()[i] + weights[2].value()[i], 1.0, 1e-9);
    }
    const Var y = blocks::skff(b, kSkff, branches);
    for (std::size_t i = 0; i < y.value().numel(); ++i) {
        const double lo = std::min({branches[0].value()[i], branches[1].value()[i], branches[2].value()[i]});
        const double hi = std::max({branches[0].value()[i], branches[1].value()[i], branches[2].value()[i]});
        EXPECT_GE(y.value()[i], lo - 1e-12);
        EXPECT_LE(y.value()[i], hi + 1e-12);
    }
}

TEST(Skff, RejectsMismatchedOrSingleBranch) {
    const ModelParams p = init_model(NetConfig::test());
    Tape tape;
    ParamBinding b(tape, p, false);
    const Var a = tape.constant(Tensor(Shape{1, 8, 4, 4}));
    const Var c = tape.constant(Tensor(Shape{1, 8, 2, 2}));
    const Var mismatched[] = {a, c};
    EXPECT_THROW(blocks::skff(b, kSkff, mismatched), ShapeError);
    const Var single[] = {a};
    EXPECT_THROW(blocks::skff(b, kSkff, single), ShapeError);
}

TEST(Mrb, ZeroFinalConvIsIdentity) {
    ModelParams p = randomized_model(NetConfig::test(), 20);
    zero_conv(p, "rrg0.mrb0.conv");
    Tape tape;
    ParamBinding b(tape, p, false);
    Rng rng(21);
    const Var x = tape.constant(random_tensor({1, 8, 8, 8}, rng));
    EXPECT_EQ(blocks::mrb(b, "rrg0.mrb0", x).value(), x.value());
}

TEST(Mrb, IndivisibleResolutionIsRejected) {
    const ModelParams p = init_model(NetConfig::test());
    Tape tape;
    ParamBinding b(tape, p, false);
    EXPECT_THROW(blocks::mrb(b, "rrg0.mrb0", tape.constant(Tensor(Shape{1, 8, 7, 8}))), ResolutionError);
}

TEST(Forward, ZeroOutputConvIsExactPassThrough) {
    ModelParams p = randomized_model(NetConfig::test(), 22);
    zero_conv(p, "conv_out");
    Rng rng(23);
    const Tensor img = uniform_tensor({2, 3, 8, 8}, rng, 0, 1);
    EXPECT_EQ(enhance(p, img), img);
}

TEST(Forward, OutputAlwaysInUnitRange) {
    ModelParams p = randomized_model(NetConfig::test(), 24);
    for (double& v : p.at("conv_out.bias").values()) v = 5.0;
    Rng rng(25);
    const Tensor up = enhance(p, uniform_tensor({1, 3, 8, 8}, rng, 0, 1));
    for (double v : up.values()) EXPECT_EQ(v, 1.0);
    for (double& v : p.at("conv_out.bias").values()) v = -5.0;
    const Tensor down = enhance(p, uniform_tensor({1, 3, 8, 8}, rng, 0, 1));
    for (double v : down.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, DeterministicForEqualConfigAndSeed) {
    Rng rng(26);
    const Tensor img = uniform_tensor({1, 3, 16, 16}, rng, 0, 1);
    EXPECT_EQ(enhance(init_model(NetConfig::test()), img), enhance(init_model(NetConfig::test()), img));
}

TEST(Forward, RejectsBadInputs) {
    const ModelParams p = init_model(NetConfig::test());
    EXPECT_THROW(enhance(p, Tensor(Shape{1, 3, 9, 8})), ResolutionError);
    EXPECT_THROW(enhance(p, Tensor(Shape{1, 1, 8, 8})), ShapeError);
}

class BlockGradients : public ::testing::TestWithParam<int> {};

TEST_P(BlockGradients, DauAndSkffMatchFiniteDifferences) {
    const auto seed = static_cast<std::uint64_t>(GetParam());
    const ModelParams p = randomized_model(NetConfig::test(), seed);
    Rng rng(seed + 100);
    const GradCheckOptions opts{1e-5, 0, seed};

    auto dau = make_block_problem(p, kDau, {random_tensor({1, 8, 4, 4}, rng)},
                                  [](const ParamBinding& b, std::span<const Var> v) { return blocks::dau(b, kDau, v[0]); });
    EXPECT_LE(grad_check(dau.fn, dau.inputs, opts).max_rel_error, 1e-4);

    auto skff = make_block_problem(
        p, kSkff, {random_tensor({1, 8, 4, 4}, rng), random_tensor({1, 8, 4, 4}, rng)},
        [](const ParamBinding& b, std::span<const Var> v) { return blocks::skff(b, kSkff, v); });
    EXPECT_LE(grad_check(skff.fn, skff.inputs, opts).max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, BlockGradients, ::testing::Range(0, 5));

TEST(BlockGradients, MrbAtTwoScales) {
    const ModelParams p = randomized_model(NetConfig::test(), 77);
    Rng rng(78);
    auto mrb = make_block_problem(p, "rrg0.mrb0", {random_tensor({1, 8, 8, 8}, rng)},
                                  [](const ParamBinding& b, std::span<const Var> v) { return blocks::mrb(b, "rrg0.mrb0", v[0]); });
    const GradCheckResult r = grad_check(mrb.fn, mrb.inputs, GradCheckOptions{1e-5, 12, 77});
    EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ModelParams p = randomized_model(NetConfig::test(), 30);
    const auto bytes = serialize(p);
    const ModelParams back = deserialize(bytes);
    EXPECT_EQ(back.config, p.config);
    EXPECT_EQ(back.tensors, p.tensors);
    EXPECT_EQ(serialize(back), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
    auto bytes = serialize(init_model(NetConfig::test()));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize(bad_magic), CheckpointError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize(truncated), CheckpointError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize(trailing), CheckpointError);
    auto version = bytes;
    version[8] = 9;
    EXPECT_THROW(deserialize(version), CheckpointError);
}

TEST(Checkpoint, ShapeMismatchNamesBothShapes) {
    ModelParams p = init_model(NetConfig::test());
    p.tensors["conv_in.bias"] = Tensor(Shape{7, 1, 1, 1});
    try {
        deserialize(serialize(p));
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(7,1,1,1)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(8,1,1,1)"), std::string::npos) << msg;
    }
}

}  // namespace
}  // namespace tse

#include "tse/grad_suite.hpp"

namespace tse {
namespace {

TEST(GradientSuite, TwoSeedsPassAndPointsAreSmooth) {
    GradSuiteOptions opts;
    opts.seeds = 2;
    opts.first_seed = 100;
    std::set<std::string> names;
    for (const auto& e : run_gradient_suite(opts)) {
        EXPECT_LE(e.max_rel_error, 1e-4) << e.name << " seed " << e.seed;
        EXPECT_GE(e.kink_margin, opts.kink_guard * opts.eps) << e.name;
        names.insert(e.name);
    }
    for (const char* n : {"channel_attention", "spatial_attention", "dau", "skff", "mrb_sampled", "network_directional"})
        EXPECT_TRUE(names.count(n)) << n;
}

}  // namespace
}  // namespace tse
