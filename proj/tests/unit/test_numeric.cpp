#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvrnn/numeric.h"

using namespace pvrnn;

namespace {

double sample_mean(const Vector& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sample_variance(const Vector& v) {
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / v.size();
}

}  // namespace

TEST(Adam, DefaultsMatchPublishedSetting) {
    AdamState state;
    EXPECT_EQ(state.config().alpha, 0.001);
    EXPECT_EQ(state.config().beta1, 0.9);
    EXPECT_EQ(state.config().beta2, 0.999);
    EXPECT_EQ(state.config().eps, 1e-8);
    EXPECT_EQ(state.step_count(), 0u);
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
    Vector p = {0.5, -1.25, 3.0};
    const Vector before = p;
    Vector g(3, 0.0);
    AdamState state;
    std::vector<ParamBlock> pb = {{"p", p}};
    std::vector<GradBlock> gb = {{"p", g}};
    adam_step(pb, gb, state);
    EXPECT_EQ(p, before);
    EXPECT_EQ(state.step_count(), 1u);
}

TEST(Adam, ConstantGradientMovesByAlpha) {
    // Hand evaluation: m = (1-b1) g, v = (1-b2) g^2, m_hat = g, v_hat = g^2,
    // step = alpha * g / (|g| + eps).
    Vector p = {0.0};
    Vector g = {1.0};
    AdamState state;
    std::vector<ParamBlock> pb = {{"p", p}};
    std::vector<GradBlock> gb = {{"p", g}};
    adam_step(pb, gb, state);
    const double expected = 0.001 * 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(p[0], expected, 1e-12);
    EXPECT_NEAR(std::abs(p[0]), 0.001, 1e-6);
}

TEST(Adam, AscendsOnPositiveGradient) {
    Vector p = {0.0, 0.0};
    Vector g = {2.0, -3.0};
    AdamState state;
    std::vector<ParamBlock> pb = {{"p", p}};
    std::vector<GradBlock> gb = {{"p", g}};
    adam_step(pb, gb, state);
    EXPECT_GT(p[0], 0.0);
    EXPECT_LT(p[1], 0.0);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
    Vector p = {0.0};
    Vector g = {std::nan("")};
    AdamState state;
    std::vector<ParamBlock> pb = {{"l0.w_dd", p}};
    std::vector<GradBlock> gb = {{"l0.w_dd", g}};
    try {
        adam_step(pb, gb, state);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
        EXPECT_NE(std::string(e.what()).find("l0.w_dd"), std::string::npos);
    }
}

TEST(Adam, ShapeMismatchRejected) {
    Vector p = {0.0, 1.0};
    Vector g = {1.0};
    AdamState state;
    std::vector<ParamBlock> pb = {{"p", p}};
    std::vector<GradBlock> gb = {{"p", g}};
    EXPECT_THROW(adam_step(pb, gb, state), Error);
}

TEST(Adam, SecondStepMatchesHandEvaluation) {
    Vector p = {0.0};
    Vector g = {1.0};
    AdamState state;
    std::vector<ParamBlock> pb = {{"p", p}};
    std::vector<GradBlock> gb = {{"p", g}};
    adam_step(pb, gb, state);
    g[0] = -2.0;
    std::vector<GradBlock> gb2 = {{"p", g}};
    adam_step(pb, gb2, state);
    const double m = 0.9 * 0.1 + 0.1 * -2.0;
    const double v = 0.999 * 0.001 + 0.001 * 4.0;
    const double m_hat = m / (1 - 0.81);
    const double v_hat = v / (1 - 0.999 * 0.999);
    const double first = 0.001 / (1.0 + 1e-8);
    EXPECT_NEAR(p[0], first + 0.001 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
    EXPECT_EQ(state.step_count(), 2u);
}

TEST(Rng, SameSeedSameStream) {
    RngStream a(42), b(42);
    EXPECT_EQ(gaussian_sample(a, 100), gaussian_sample(b, 100));
}

TEST(Rng, DerivedStreamsIndependentOfDrawOrder) {
    RngStream a = RngStream::derive(7, {1, 2, 3});
    RngStream other = RngStream::derive(7, {1, 2, 4});
    (void)gaussian_sample(other, 17);
    RngStream b = RngStream::derive(7, {1, 2, 3});
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(RngStream::derive(7, {1, 2, 3}).seed(), RngStream::derive(7, {1, 2, 4}).seed());
}

TEST(Rng, GaussianMomentsAtOneMillion) {
    RngStream rng(0);
    const Vector v = gaussian_sample(rng, 1000000);
    EXPECT_NEAR(sample_mean(v), 0.0, 0.01);
    EXPECT_NEAR(sample_variance(v), 1.0, 0.01);
}

TEST(Rng, UniformInUnitInterval) {
    RngStream rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Linalg, GemvAndTranspose) {
    Matrix m(2, 3);
    double k = 1.0;
    for (double& v : m.values()) v = k++;
    Vector x = {1.0, 0.5, -1.0};
    Vector y = {10.0, 20.0};
    gemv_add(m, x, y);
    EXPECT_DOUBLE_EQ(y[0], 10.0 + 1.0 + 1.0 - 3.0);
    EXPECT_DOUBLE_EQ(y[1], 20.0 + 4.0 + 2.5 - 6.0);
    Vector r = {1.0, -1.0};
    Vector out(3, 0.0);
    gemv_transposed_add(m, r, out);
    EXPECT_EQ(out, (Vector{-3.0, -3.0, -3.0}));
    Matrix acc(2, 3);
    outer_add(acc, r, x);
    EXPECT_DOUBLE_EQ(acc(1, 2), 1.0);
    EXPECT_DOUBLE_EQ(acc(0, 1), 0.5);
}

// Momentum carries earlier gradients forward, so "any state" means any step
// count and hyperparameters with zero moments.
TEST(NumericInvariant, AdamZeroGradientIsIdentityForAnyStepCount) {
    RngStream rng(11);
    for (std::uint64_t t : {0ull, 1ull, 7ull, 100000ull}) {
        Vector p = gaussian_sample(rng, 8);
        const Vector before = p;
        AdamState state(AdamConfig{0.05, 0.5, 0.9, 1e-8});
        state.restore(t, {Vector(8, 0.0)}, {Vector(8, 0.0)});
        Vector zero(8, 0.0);
        std::vector<ParamBlock> pb = {{"p", p}};
        std::vector<GradBlock> gb = {{"p", zero}};
        adam_step(pb, gb, state);
        EXPECT_EQ(p, before);
        EXPECT_EQ(state.step_count(), t + 1);
    }
}

TEST(NumericInvariant, GaussianPassesKolmogorovSmirnov) {
    RngStream rng(123);
    Vector v = gaussian_sample(rng, 100000);
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
        dmax = std::max({dmax, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
    }
    // Asymptotic critical value at alpha = 0.001 is 1.949 / sqrt(n).
    EXPECT_LT(dmax, 1.949 / std::sqrt(n));
}
