#pragma once

#include <map>
#include <vector>

#include "pvrnn/runtime.h"

namespace pvrnn {

enum class DivergenceMode { discrete, continuous };

struct Discretizer {
    DivergenceMode mode = DivergenceMode::discrete;
    double threshold = 0.0;       // symbol midpoint in model space
    double mse_threshold = 0.01;  // continuous mode, per-step MSE over dimensions
};

// 1-based index of the first diverging step; the sequence length when none.
std::size_t diverging_step(const Matrix& target, const Matrix& generated, const Discretizer& disc);

// Mean over targets and their regenerations.
double average_diverging_step(const std::vector<Matrix>& targets,
                              const std::vector<std::vector<Matrix>>& regenerations,
                              const Discretizer& disc);

// Across-run variance of the raw outputs, averaged over time and dimensions.
double variance_of_divergence(const std::vector<Matrix>& runs);

std::vector<int> discretize(const Matrix& sequence, double threshold = 0.0);

struct NgramDistribution {
    std::size_t n = 12;
    std::size_t total = 0;  // number of n-grams counted
    std::map<std::vector<int>, double> probability;

    static NgramDistribution from_stream(const std::vector<int>& symbols, std::size_t n);
    std::size_t support_size() const { return probability.size(); }
};

struct NgramKl {
    double value = 0.0;
    double floor = 0.0;           // probability assigned to n-grams unseen in generation
    std::size_t floored = 0;      // reference n-grams that needed the floor
};

// KL(reference || generated). Reference n-grams missing from the generated
// distribution get probability 1 / (2 * generated.total).
NgramKl ngram_kl(const NgramDistribution& reference, const NgramDistribution& generated);
NgramKl ngram_kl(const std::vector<int>& reference, const std::vector<int>& generated,
                 std::size_t n = 12);

// Largest exponent of a Jacobian chain: mean of log ||J_t r|| over the steps
// after `transient`, with r renormalized every step.
double lyapunov_from_chain(std::span<const Matrix> chain, std::size_t transient,
                           std::span<const double> r0);

// One-step map of a single-layer prior-driven network on the state [Z; d],
// with h recovered as atanh(d) and the prior noise held at `eps`.
Vector lyapunov_map(const Parameters& params, const NetworkConfig& config,
                    std::span<const double> state, std::span<const double> eps);
Matrix lyapunov_jacobian(const Parameters& params, const NetworkConfig& config,
                         std::span<const double> state, std::span<const double> eps);

struct LyapunovConfig {
    std::size_t steps = 50000;
    std::size_t transient = 1000;
    bool sampled_noise = true;
    std::uint64_t seed = 0;
};

// Orbit from a random A_1, then the prior path. Single-layer PV-RNN only.
double lyapunov_largest(const Checkpoint& ckpt, const LyapunovConfig& config);

// Mean squared error per look-ahead k = 1..max_k, checked against targets.
std::vector<double> prediction_mse(const std::vector<PredictionRecord>& records,
                                   const Matrix& targets, std::size_t max_k);

// Mean prior sigma over posterior rollouts of the training sequences.
double mean_prior_sigma(const Checkpoint& ckpt, const SequenceDataset& data, std::uint64_t seed);

struct AnalysisConfig {
    std::size_t regenerations = 10;      // per training sequence, for ADS
    std::size_t vd_runs = 50;
    std::size_t ngram_n = 12;
    std::size_t free_steps = 50000;
    std::size_t lyapunov_steps = 50000;
    std::size_t lyapunov_transient = 1000;
    double mse_threshold = 0.01;         // continuous divergence
    std::size_t lookahead = 5;
    std::size_t test_sequences = 1;      // exp2: how many test sequences to regress
};

struct Exp1Metrics {
    double ads = 0.0;
    double vd = 0.0;
    NgramKl ngram;
};

// Target-regeneration ADS and VD averaged over the training sequences, and the
// n-gram KL of a free generation against the concatenated training set.
Exp1Metrics exp1_metrics(const Checkpoint& ckpt, const SequenceDataset& train,
                         const AnalysisConfig& config, std::uint64_t seed);

struct Exp2Metrics {
    double ads = 0.0;
    double mean_prior_sigma = 0.0;
    std::vector<double> mse;  // k = 1..lookahead
};

// Continuous ADS and mean prior sigma on the training set; k-step MSE from
// error regression (PV-RNN) or closed-loop prediction (VRNN) on the test set,
// skipped when `test` is empty.
Exp2Metrics exp2_metrics(const Checkpoint& ckpt, const SequenceDataset& train,
                         const std::vector<Matrix>& test, const RegressionConfig& regression,
                         const AnalysisConfig& config, std::uint64_t seed);

// Pooled k-step MSE over several test sequences.
std::vector<double> test_set_mse(const Checkpoint& ckpt, const std::vector<Matrix>& test,
                                 const RegressionConfig& regression, std::size_t lookahead);

}  // namespace pvrnn
