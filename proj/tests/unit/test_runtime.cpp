#include <gtest/gtest.h>

#include <filesystem>

#include "pvrnn/runtime.h"

using namespace pvrnn;
namespace fs = std::filesystem;

namespace {

NetworkConfig small_net(std::size_t dim = 1) {
    NetworkConfig c;
    c.layers = {{6, 1, 2.0}};
    c.output_dim = dim;
    return c;
}

SequenceDataset toy_exp1(std::size_t n = 3) {
    Exp1Corpus corpus;
    corpus.sequences = n;
    corpus.length = 12;
    return make_exp1_dataset(corpus, 5);
}

SequenceDataset toy_exp2(std::size_t n = 2, std::size_t length = 60) {
    SequenceDataset d;
    d.dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(10 + i);
        const PrimitiveTrajectory tr = pfsm_generate_primitives(primitive_machine(), 8, default_templates(), rng);
        Matrix m(length, 2);
        for (std::size_t t = 0; t < length; ++t) {
            m(t, 0) = tr.points(t, 0);
            m(t, 1) = tr.points(t, 1);
        }
        d.sequences.push_back(m);
    }
    return d;
}

TrainConfig quick(std::size_t epochs, double w = 0.1) {
    TrainConfig t;
    t.epochs = epochs;
    t.w = w;
    t.seed = 77;
    t.adam.alpha = 0.01;
    return t;
}

const Checkpoint& trained_exp2() {
    static const Checkpoint ckpt = train(small_net(2), toy_exp2(), quick(150, 0.05));
    return ckpt;
}

}  // namespace

TEST(Train, ZeroEpochsIsInitialization) {
    const SequenceDataset d = toy_exp1();
    const TrainConfig cfg = quick(0);
    const Checkpoint init = initialize_training(small_net(), d, cfg);
    const Checkpoint trained = train(small_net(), d, cfg);
    EXPECT_EQ(trained.params, init.params);
    EXPECT_EQ(trained.adaptive, init.adaptive);
    EXPECT_EQ(trained.epoch, 0u);
}

TEST(Train, RecordsHistoryAndImproves) {
    const SequenceDataset d = toy_exp1();
    const Checkpoint c = train(small_net(), d, quick(400));
    ASSERT_EQ(c.history.size(), 400u);
    EXPECT_EQ(c.history.back().epoch, 400u);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
        first += c.history[i].total;
        last += c.history[c.history.size() - 1 - i].total;
    }
    EXPECT_GT(last, first);
    for (const HistoryRow& r : c.history) EXPECT_NEAR(r.total, r.likelihood - 0.1 * r.kl, 1e-9);
}

TEST(Train, RejectsMismatchedDimensions) {
    EXPECT_THROW(train(small_net(2), toy_exp1(), quick(1)), Error);
    SequenceDataset empty;
    empty.dim = 1;
    EXPECT_THROW(train(small_net(), empty, quick(1)), Error);
}

TEST(Train, ThreadedMatchesSerial) {
    const SequenceDataset d = toy_exp1(4);
    TrainConfig serial = quick(30);
    TrainConfig threaded = serial;
    threaded.threads = 3;
    EXPECT_EQ(train(small_net(), d, serial), train(small_net(), d, threaded));
}

TEST(Train, EarlyStopHook) {
    const SequenceDataset d = toy_exp1();
    Checkpoint c = initialize_training(small_net(), d, quick(100));
    TrainHooks hooks;
    hooks.on_epoch = [](std::uint64_t epoch, const LossBreakdown&) { return epoch < 7; };
    train(c, d, quick(100), hooks);
    EXPECT_EQ(c.epoch, 7u);
}

TEST(Regenerate, ZeroNoiseRepeatsIdentical) {
    const Checkpoint c = train(small_net(), toy_exp1(), quick(50));
    const std::vector<Matrix> runs = regenerate_target(c, 1, 2, 3, true);
    ASSERT_EQ(runs.size(), 2u);
    EXPECT_EQ(runs[0], runs[1]);
    EXPECT_EQ(runs[0].rows(), 12u);
    EXPECT_THROW(regenerate_target(c, 3, 2, 3), Error);
}

TEST(Regenerate, SampledNoiseVaries) {
    const Checkpoint c = train(small_net(), toy_exp1(), quick(5, 0.0));
    const std::vector<Matrix> runs = regenerate_target(c, 0, 2, 3, false);
    EXPECT_NE(runs[0], runs[1]);
}

TEST(Regression, WindowLargerThanSequenceRejected) {
    RegressionConfig r;
    r.window = 100;
    EXPECT_THROW(error_regression(trained_exp2(), toy_exp2(1, 60).sequences[0], r), Error);
}

TEST(Regression, RecordsLayout) {
    RegressionConfig r;
    r.window = 10;
    r.iterations = 2;
    r.lookahead = 3;
    const Matrix seq = toy_exp2(1, 30).sequences[0];
    const RegressionResult res = error_regression(trained_exp2(), seq, r);
    EXPECT_EQ(res.windows, 30u);
    EXPECT_EQ(res.adaptive.length(), 30u);
    for (const PredictionRecord& p : res.predictions) {
        ASSERT_GE(p.k, 1u);
        ASSERT_LE(p.k, 3u);
        ASSERT_LE(p.t, 30u);
        EXPECT_EQ(p.target, (Vector{seq(p.t - 1, 0), seq(p.t - 1, 1)}));
    }
    EXPECT_EQ(res.predictions.size(), 27u * 3u + 2u + 1u);
}

TEST(Regression, NoIterationsMeansNoAdaptation) {
    RegressionConfig r;
    r.window = 8;
    r.iterations = 0;
    const SequenceDataset d = toy_exp2(2, 25);
    const RegressionResult a = error_regression(trained_exp2(), d.sequences[0], r);
    const RegressionResult b = error_regression(trained_exp2(), d.sequences[1], r);
    ASSERT_EQ(a.predictions.size(), b.predictions.size());
    for (std::size_t i = 0; i < a.predictions.size(); ++i) {
        EXPECT_EQ(a.predictions[i].prediction, b.predictions[i].prediction);
    }
    for (const auto& m : a.adaptive.mu)
        for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(Regression, CoarseStride) {
    RegressionConfig r;
    r.window = 10;
    r.iterations = 2;
    r.stride = 5;
    r.lookahead = 5;
    const RegressionResult res = error_regression(trained_exp2(), toy_exp2(1, 30).sequences[0], r);
    EXPECT_EQ(res.windows, 6u);
    r.stride = 11;
    EXPECT_THROW(r.validate(), Error);
}

TEST(Regression, MatchingTargetGivesNoLikelihoodGradient) {
    const Checkpoint& c = trained_exp2();
    RngStream rng(4);
    AdaptiveVectors a = AdaptiveVectors::zeros(c.network, 6);
    for (double& v : a.mu[0].values()) v = rng.gaussian();
    const NoiseTable noise = sample_noise(c.network, 6, rng);
    const ElboResult r = elbo(c.params, c.network, a, Matrix(6, 2), 0.0, noise, NetworkState::zeros(c.network));
    const Matrix own = r.tape.outputs();
    const ElboResult again = elbo(c.params, c.network, a, own, 0.0, noise, NetworkState::zeros(c.network));
    const GradientSet g = bptt_gradients(c.params, c.network, again.tape, own, 0.0, {false, true});
    for (const auto& m : g.adaptive.mu)
        for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(FixedWindow, ZeroHorizonReturnsFitOnly) {
    RegressionConfig r;
    const FixedWindowResult f = fixed_window_regression(trained_exp2(), toy_exp2(1, 40).sequences[0], 20, 3, 0, r);
    EXPECT_EQ(f.fitted.rows(), 20u);
    EXPECT_EQ(f.continuation.rows(), 0u);
    EXPECT_EQ(f.adaptive.length(), 20u);
}

TEST(FixedWindow, MoreIterationsFitBetter) {
    SequenceDataset d;
    d.dim = 2;
    for (std::size_t i = 0; i < 2; ++i) {
        RngStream rng(10 + i);
        const PrimitiveTrajectory tr = pfsm_generate_primitives(primitive_machine(), 30, default_templates(), rng);
        Matrix m(220, 2);
        for (std::size_t t = 0; t < 220; ++t) {
            m(t, 0) = tr.points(t, 0);
            m(t, 1) = tr.points(t, 1);
        }
        d.sequences.push_back(m);
    }
    const Checkpoint ckpt = train(small_net(2), d, quick(2000, 0.05));
    RegressionConfig r;
    const FixedWindowResult few = fixed_window_regression(ckpt, d.sequences[0], 200, 10, 5, r);
    const FixedWindowResult many = fixed_window_regression(ckpt, d.sequences[0], 200, 1000, 5, r);
    EXPECT_LT(many.window_mse, few.window_mse);
}

TEST(FixedWindow, ContinuationDependsOnlyOnA) {
    RegressionConfig r;
    const Matrix seq = toy_exp2(1, 60).sequences[0];
    const FixedWindowResult a = fixed_window_regression(trained_exp2(), seq, 30, 20, 15, r);
    const FixedWindowResult b = fixed_window_regression(trained_exp2(), seq, 30, 20, 15, r);
    EXPECT_EQ(a.adaptive, b.adaptive);
    EXPECT_EQ(a.continuation, b.continuation);
    EXPECT_EQ(a.continuation.rows(), 15u);
}

TEST(Vrnn, PredictRoutesThroughClosedLoop) {
    NetworkConfig c = small_net(2);
    c.mode = Mode::vrnn;
    const Checkpoint ckpt = train(c, toy_exp2(), quick(30));
    const Matrix seq = toy_exp2(1, 20).sequences[0];
    const auto recs = vrnn_predict(ckpt, seq, 5, 1);
    EXPECT_EQ(recs.size(), 15u * 5u + 4u + 3u + 2u + 1u);
    RegressionConfig r;
    r.window = 5;
    EXPECT_THROW(error_regression(ckpt, seq, r), Error);
}

TEST(RuntimeInvariant, RegressionLeavesWeightsFrozen) {
    const Checkpoint& c = trained_exp2();
    const std::string before = parameters_hash(c.params);
    RegressionConfig r;
    r.window = 10;
    r.iterations = 5;
    (void)error_regression(c, toy_exp2(1, 30).sequences[0], r);
    (void)fixed_window_regression(c, toy_exp2(1, 30).sequences[0], 10, 5, 5, r);
    EXPECT_EQ(parameters_hash(c.params), before);
}

TEST(RuntimeInvariant, WindowLocality) {
    // Targets changed strictly right of a window cannot affect what that
    // window fitted or predicted.
    const Checkpoint& c = trained_exp2();
    RegressionConfig r;
    r.window = 8;
    r.iterations = 4;
    r.lookahead = 3;
    Matrix a = toy_exp2(1, 30).sequences[0];
    Matrix b = a;
    const std::size_t e0 = 17;
    for (std::size_t t = e0; t < 30; ++t) b(t, 0) += 0.5;
    const RegressionResult ra = error_regression(c, a, r);
    const RegressionResult rb = error_regression(c, b, r);
    std::size_t compared = 0;
    for (std::size_t i = 0; i < ra.predictions.size(); ++i) {
        const PredictionRecord& p = ra.predictions[i];
        if (p.t - p.k > e0) continue;
        EXPECT_EQ(p.prediction, rb.predictions[i].prediction) << "t=" << p.t << " k=" << p.k;
        ++compared;
    }
    EXPECT_GT(compared, 40u);
    EXPECT_NE(ra.predictions.back().prediction, rb.predictions.back().prediction);
}

TEST(RuntimeInvariant, RegressionReproducible) {
    RegressionConfig r;
    r.window = 8;
    r.iterations = 3;
    r.seed = 12;
    r.sample_prediction_noise = true;
    const Matrix seq = toy_exp2(1, 25).sequences[0];
    const RegressionResult a = error_regression(trained_exp2(), seq, r);
    const RegressionResult b = error_regression(trained_exp2(), seq, r);
    ASSERT_EQ(a.predictions.size(), b.predictions.size());
    for (std::size_t i = 0; i < a.predictions.size(); ++i) EXPECT_EQ(a.predictions[i].prediction, b.predictions[i].prediction);
    EXPECT_EQ(a.adaptive, b.adaptive);
}

TEST(RuntimeInvariant, ZeroWGivesNoPriorHeadGradient) {
    const Checkpoint& c = trained_exp2();
    RngStream rng(30);
    AdaptiveVectors a = AdaptiveVectors::zeros(c.network, 10);
    for (double& v : a.mu[0].values()) v = rng.gaussian();
    const Matrix target = toy_exp2(1, 10).sequences[0];
    const ElboResult r = elbo(c.params, c.network, a, target, 0.0, sample_noise(c.network, 10, rng),
                              NetworkState::zeros(c.network));
    const GradientSet g = bptt_gradients(c.params, c.network, r.tape, target, 0.0);
    std::size_t prior_blocks = 0;
    for (const GradBlock& b : g.params.grad_blocks()) {
        if (parameter_group(b.name) != "theta_Z") continue;
        ++prior_blocks;
        for (double v : b.values) EXPECT_EQ(v, 0.0) << b.name;
    }
    EXPECT_EQ(prior_blocks, 4u);
}

TEST(RuntimeInvariant, IdenticalRunsGiveIdenticalCheckpoints) {
    const SequenceDataset d = toy_exp1();
    const Checkpoint a = train(small_net(), d, quick(40));
    const Checkpoint b = train(small_net(), d, quick(40));
    const fs::path dir = fs::temp_directory_path() / "pvrnn_unit";
    fs::create_directories(dir);
    checkpoint_save(a, dir / "a.ckpt");
    checkpoint_save(b, dir / "b.ckpt");
    EXPECT_EQ(file_sha256(dir / "a.ckpt"), file_sha256(dir / "b.ckpt"));
}

TEST(RuntimeInvariant, ResumeMatchesUninterrupted) {
    const SequenceDataset d = toy_exp1();
    const Checkpoint straight = train(small_net(), d, quick(40));
    const fs::path dir = fs::temp_directory_path() / "pvrnn_unit";
    fs::create_directories(dir);
    Checkpoint partial = initialize_training(small_net(), d, quick(40));
    train(partial, d, quick(17));
    checkpoint_save(partial, dir / "partial.ckpt");
    Checkpoint resumed = checkpoint_load(dir / "partial.ckpt");
    train(resumed, d, quick(40));
    EXPECT_EQ(resumed, straight);
}
