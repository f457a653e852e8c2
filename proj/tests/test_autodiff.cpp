#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "tse/autodiff.hpp"
#include "tse/grad_check.hpp"

namespace tse {
namespace {

using testing::random_tensor;

// Uniform values kept at least `gap` away from each other and from the kinks
// at 0 and +-0.5, so median/max/relu/clamp stay smooth under the probes.
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

TEST(Tape, SumGradientIsOnes) {
    Tape tape;
    Rng rng(1);
    Var x = tape.leaf(random_tensor({1, 2, 3, 3}, rng));
    tape.backward(ops::sum(x));
    for (double g : tape.grad(x).values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, MedianGradientSelectsMedianChannel) {
    Tape tape;
    Var x = tape.leaf(Tensor(Shape{1, 3, 1, 1}, {0.1, 0.9, 0.4}));
    tape.backward(ops::sum(ops::median_pool_channels(x)));
    EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{0, 0, 1}));
}

TEST(Tape, EvenMedianSplitsGradient) {
    Tape tape;
    Var x = tape.leaf(Tensor(Shape{1, 4, 1, 1}, {1, 2, 3, 10}));
    tape.backward(ops::sum(ops::median_pool_channels(x)));
    EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{0, 0.5, 0.5, 0}));
}

TEST(Tape, MaxPoolTieRoutesToFirstIndex) {
    Tape tape;
    Var x = tape.leaf(Tensor(Shape{1, 1, 2, 2}, {3, 1, 3, 2}));
    tape.backward(ops::sum(ops::global_pool(x, PoolMode::kMax)));
    EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Tape, DetachedNodeIsRejected) {
    Tape tape;
    Tape other;
    Var x = other.leaf(Tensor(Shape{1, 1, 1, 1}, 2.0));
    EXPECT_THROW(tape.backward(x), NotOnTapeError);
    Var c = tape.constant(Tensor(Shape{1, 1, 1, 1}, 1.0));
    EXPECT_THROW(tape.backward(ops::sum(c)), NotOnTapeError);
    EXPECT_THROW(tape.backward(Var{}), NotOnTapeError);
    Var y = tape.leaf(Tensor(Shape{1, 1, 1, 1}, 1.0));
    EXPECT_THROW(ops::add(x, y), NotOnTapeError);
}

TEST(Tape, NonScalarLossIsShapeError) {
    Tape tape;
    Var x = tape.leaf(Tensor(Shape{1, 1, 2, 1}, 1.0));
    EXPECT_THROW(tape.backward(ops::relu(x)), ShapeError);
}

TEST(Tape, InferenceModeRecordsNothing) {
    Tape tape(Tape::Mode::kInference);
    Var x = tape.constant(Tensor(Shape{1, 1, 2, 2}, 1.0));
    Var y = ops::sigmoid(ops::add(x, x));
    EXPECT_EQ(tape.size(), 0u);
    EXPECT_NEAR(y.value()[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
}

TEST(Tape, ReplayVisitsSharedNodeOnce) {
    // y = x*x + x: the shared x collects both contributions exactly once each.
    Tape tape;
    Var x = tape.leaf(Tensor(Shape{1, 1, 1, 1}, 3.0));
    tape.backward(ops::sum(ops::add(ops::mul(x, x), x)));
    EXPECT_EQ(tape.grad(x)[0], 7.0);
}

TEST(Elementwise, SigmoidOfZeroIsHalf) {
    Tape tape;
    Var x = tape.constant(Tensor(Shape{1, 1, 1, 1}, 0.0));
    EXPECT_EQ(ops::sigmoid(x).value()[0], 0.5);
}

TEST(Elementwise, SoftmaxOfEqualLogitsIsUniform) {
    Tape tape;
    const Var logits[] = {tape.constant(Tensor(Shape{1, 2, 1, 1}, 0.3)), tape.constant(Tensor(Shape{1, 2, 1, 1}, 0.3))};
    const auto w = ops::softmax_over_branches(logits);
    for (const Var& v : w)
        for (double e : v.value().values()) EXPECT_EQ(e, 0.5);
}

TEST(Elementwise, SoftmaxWeightsSumToOne) {
    Rng rng(4);
    Tape tape;
    std::vector<Var> logits;
    for (int b = 0; b < 4; ++b) logits.push_back(tape.constant(random_tensor({2, 5, 3, 3}, rng, -20, 20)));
    const auto w = ops::softmax_over_branches(logits);
    for (std::size_t i = 0; i < w[0].value().numel(); ++i) {
        double s = 0;
        for (const Var& v : w) {
            EXPECT_GT(v.value()[i], 0.0);
            EXPECT_LT(v.value()[i], 1.0);
            s += v.value()[i];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Elementwise, ReluGradientByFiniteDifferences) {
    Tensor x(Shape{1, 1, 1, 2}, {-0.7, 0.4});
    Tape tape;
    Var v = tape.leaf(x);
    tape.backward(ops::sum(ops::relu(v)));
    EXPECT_EQ(tape.grad(v).values(), (std::vector<double>{0, 1}));
    const double err = grad_check([](const Var& a) { return ops::relu(a); }, x, 1e-5);
    EXPECT_LE(err, 1e-10);
}

TEST(Elementwise, BroadcastRules) {
    Tape tape;
    Var x = tape.constant(Tensor(Shape{1, 2, 2, 2}, 1.0));
    Var gate = tape.constant(Tensor(Shape{1, 2, 1, 1}, {2, 3}));
    Var map = tape.constant(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(ops::mul(x, gate).value().values(), (std::vector<double>{2, 2, 2, 2, 3, 3, 3, 3}));
    EXPECT_EQ(ops::mul(map, x).value().values(), (std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4}));
    Var bad = tape.constant(Tensor(Shape{1, 3, 1, 1}));
    EXPECT_THROW(ops::add(x, bad), ShapeError);
    Var other_batch = tape.constant(Tensor(Shape{2, 2, 1, 1}));
    EXPECT_THROW(ops::mul(x, other_batch), ShapeError);
}

TEST(GlobalPool, ConstantAndKnownValues) {
    Tape tape;
    Var c = tape.constant(Tensor(Shape{1, 2, 3, 3}, 0.25));
    const Var avg = ops::global_pool(c, PoolMode::kAvg);
    const Var mx = ops::global_pool(c, PoolMode::kMax);
    for (double v : avg.value().values()) EXPECT_EQ(v, 0.25);
    for (double v : mx.value().values()) EXPECT_EQ(v, 0.25);
    Var x = tape.constant(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(ops::global_pool(x, PoolMode::kAvg).value()[0], 2.5);
    EXPECT_EQ(ops::global_pool(x, PoolMode::kMax).value()[0], 4.0);
}

TEST(GlobalPool, AverageNeverExceedsMax) {
    Rng rng(9);
    Tape tape;
    Var x = tape.constant(random_tensor({3, 4, 5, 5}, rng));
    const Tensor avg = ops::global_pool(x, PoolMode::kAvg).value();
    const Tensor mx = ops::global_pool(x, PoolMode::kMax).value();
    for (std::size_t i = 0; i < avg.numel(); ++i) EXPECT_LE(avg[i], mx[i]);
}

TEST(GradCheck, IdentityIsExact) {
    Rng rng(2);
    EXPECT_LE(grad_check([](const Var& a) { return a; }, random_tensor({1, 2, 3, 3}, rng), 1e-5), 1e-10);
}

TEST(GradCheck, ConvWithRandomKernel) {
    Rng rng(12);
    const Tensor w = random_tensor({2, 2, 3, 3}, rng);
    const Tensor b = random_tensor({2, 1, 1, 1}, rng);
    const double err = grad_check(
        [&](const Var& x) {
            Tape& t = x.tape();
            return ops::conv2d(x, t.constant(w), t.constant(b), 1, 1);
        },
        random_tensor({1, 2, 5, 5}, rng), 1e-5);
    EXPECT_LE(err, 1e-6);
}

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, AllWithinTolerance) {
    const auto seed = static_cast<std::uint64_t>(GetParam());
    Rng rng(seed * 7919 + 1);
    const GradCheckOptions opts{1e-5, 0, seed};
    auto check = [&](const char* name, const TapeFunction& f, const std::vector<Tensor>& inputs) {
        const GradCheckResult r = grad_check(f, inputs, opts);
        EXPECT_LE(r.max_rel_error, 1e-4) << name << " seed " << seed;
    };
    check("conv2d stride 2",
          [](std::span<const Var> v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); },
          {random_tensor({2, 2, 5, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3, 1, 1, 1}, rng)});
    check("median", [](std::span<const Var> v) { return ops::median_pool_channels(v[0]); },
          {tie_free({2, 1 + seed % 6, 3, 3}, rng)});
    check("max channels", [](std::span<const Var> v) { return ops::max_pool_channels(v[0]); }, {tie_free({1, 4, 3, 3}, rng)});
    check("mean channels", [](std::span<const Var> v) { return ops::mean_pool_channels(v[0]); }, {random_tensor({1, 4, 3, 3}, rng)});
    check("gap", [](std::span<const Var> v) { return ops::global_pool(v[0], PoolMode::kAvg); }, {random_tensor({2, 3, 4, 4}, rng)});
    check("gmp", [](std::span<const Var> v) { return ops::global_pool(v[0], PoolMode::kMax); }, {tie_free({2, 3, 4, 4}, rng)});
    for (kernels::ResizeRatio r : {kernels::ResizeRatio{1, 2}, kernels::ResizeRatio{1, 4}, kernels::ResizeRatio{2, 1},
                                   kernels::ResizeRatio{4, 1}}) {
        check("resize", [r](std::span<const Var> v) { return ops::resize_bilinear(v[0], r); }, {random_tensor({1, 2, 4, 8}, rng)});
    }
    check("add broadcast", [](std::span<const Var> v) { return ops::add(v[0], v[1]); },
          {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 3, 1, 1}, rng)});
    check("mul broadcast", [](std::span<const Var> v) { return ops::mul(v[0], v[1]); },
          {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 1, 2, 2}, rng)});
    check("sub", [](std::span<const Var> v) { return ops::sub(v[0], v[1]); },
          {random_tensor({1, 3, 2, 2}, rng), random_tensor({1, 3, 2, 2}, rng)});
    check("relu", [](std::span<const Var> v) { return ops::relu(v[0]); }, {tie_free({1, 2, 3, 3}, rng)});
    check("sigmoid", [](std::span<const Var> v) { return ops::sigmoid(v[0]); }, {random_tensor({1, 2, 3, 3}, rng, -4, 4)});
    check("clamp", [](std::span<const Var> v) { return ops::clamp(v[0], -0.5, 0.5); }, {tie_free({1, 2, 3, 3}, rng)});
    check("softmax",
          [](std::span<const Var> v) {
              const auto w = ops::softmax_over_branches(v);
              return ops::add(ops::scale(w[0], 0.3), ops::add(ops::scale(w[1], -1.7), w[2]));
          },
          {random_tensor({1, 2, 2, 2}, rng, -3, 3), random_tensor({1, 2, 2, 2}, rng, -3, 3),
           random_tensor({1, 2, 2, 2}, rng, -3, 3)});
    check("concat", [](std::span<const Var> v) { return ops::concat_channels(v); },
          {random_tensor({2, 1, 2, 3}, rng), random_tensor({2, 3, 2, 3}, rng)});
    check("mean", [](std::span<const Var> v) { return ops::mean(v[0]); }, {random_tensor({1, 3, 2, 2}, rng)});
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Range(0, 20));

TEST(DirectionalCheck, AgreesOnSmoothComposite) {
    Rng rng(31);
    const GradCheckResult r = directional_check(
        [](std::span<const Var> v) { return ops::sigmoid(ops::conv2d(v[0], v[1], v[2], 1, 1)); },
        {random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 1, 1, 1}, rng)}, 8,
        GradCheckOptions{1e-5, 0, 3});
    EXPECT_LE(r.max_rel_error, 1e-6);
    EXPECT_EQ(r.coords_checked, 8u);
}

}  // namespace
}  // namespace tse

namespace tse {
namespace {

TEST(KinkMargin, TracksDistanceToNonSmoothPoints) {
    Tape tape;
    EXPECT_TRUE(std::isinf(tape.kink_margin()));
    const Var x = tape.leaf(Tensor(Shape{1, 3, 1, 2}, std::vector<double>{0.3, -0.02, 0.9, 0.5, 0.1, 0.45}));
    ops::relu(x);
    EXPECT_DOUBLE_EQ(tape.kink_margin(), 0.02);
    ops::median_pool_channels(x);  // position 1: values -0.02, 0.5, 0.45 -> median 0.45, nearest other 0.05 away
    EXPECT_NEAR(tape.kink_margin(), 0.02, 1e-15);
    Tape t2;
    ops::median_pool_channels(t2.leaf(Tensor(Shape{1, 3, 1, 1}, std::vector<double>{0.0, 0.45, 0.5})));
    EXPECT_NEAR(t2.kink_margin(), 0.05, 1e-15);
    Tape t3;
    ops::max_pool_channels(t3.leaf(Tensor(Shape{1, 3, 1, 1}, std::vector<double>{0.0, 0.7, 0.5})));
    EXPECT_NEAR(t3.kink_margin(), 0.2, 1e-15);
    Tape t4;
    ops::clamp(t4.leaf(Tensor(Shape{1, 1, 1, 2}, std::vector<double>{0.95, 0.3})), 0.0, 1.0);
    EXPECT_NEAR(t4.kink_margin(), 0.05, 1e-15);
    Tape inference(Tape::Mode::kInference);
    ops::relu(inference.constant(Tensor(Shape{1, 1, 1, 1}, 0.0)));
    EXPECT_TRUE(std::isinf(inference.kink_margin()));
}

}  // namespace
}  // namespace tse
