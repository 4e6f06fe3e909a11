#pragma once

#include <functional>
#include <optional>

#include "pvrnn/checkpoint.h"
#include "pvrnn/datagen.h"
#include "pvrnn/objective.h"

namespace pvrnn {

struct TrainConfig {
    std::size_t epochs = 50000;
    double w = 0.1;
    AdamConfig adam;
    // Parameter init draws from derive(seed, {0}); epoch e, sequence i noise
    // from derive(seed, {1, e, i}).
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::size_t history_every = 1;
    std::size_t threads = 1;

    void validate() const;
};

// Fresh checkpoint at epoch 0: initialized parameters, zero A per sequence.
Checkpoint initialize_training(const NetworkConfig& network, const SequenceDataset& data,
                               const TrainConfig& config);

struct TrainHooks {
    std::function<void(const Checkpoint&)> on_checkpoint;
    // Called after every epoch; returning false stops training early.
    std::function<bool(std::uint64_t epoch, const LossBreakdown& summed)> on_epoch;
};

// Runs epochs ckpt.epoch + 1 .. config.epochs in place. A checkpoint written
// mid-run and passed back in continues bit-identically.
void train(Checkpoint& ckpt, const SequenceDataset& data, const TrainConfig& config,
           const TrainHooks& hooks = {});

Checkpoint train(const NetworkConfig& network, const SequenceDataset& data,
                 const TrainConfig& config);

// Prior-driven rollouts bootstrapped with the trained A_1 of one sequence.
std::vector<Rollout> regenerate_rollouts(const Checkpoint& ckpt, std::size_t sequence,
                                         std::size_t repeats, std::uint64_t seed,
                                         bool zero_noise = false);
std::vector<Matrix> regenerate_target(const Checkpoint& ckpt, std::size_t sequence,
                                      std::size_t repeats, std::uint64_t seed,
                                      bool zero_noise = false);

// Prior-driven rollout from a random A_1 (both halves drawn from N(0, 1)).
Matrix free_generation(const Checkpoint& ckpt, std::size_t length, std::uint64_t seed);

struct RegressionConfig {
    std::size_t window = 50;
    std::size_t iterations = 30;
    std::size_t stride = 1;
    std::size_t lookahead = 5;
    double learning_rate = 0.1;
    std::optional<double> w;  // defaults to the checkpoint's training w
    bool sample_prediction_noise = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PredictionRecord {
    std::size_t t = 0;  // 1-based target time
    std::size_t k = 0;  // look-ahead distance
    Vector prediction;
    Vector target;
};

struct RegressionResult {
    std::vector<PredictionRecord> predictions;
    AdaptiveVectors adaptive;  // final A^test over the whole sequence
    std::size_t windows = 0;
};

// Sliding-window error regression with frozen weights. Windows end at
// e = stride, 2 stride, ...; each covers [max(1, e - m + 1), e]. After the
// iterations, predictions for e + 1 .. e + lookahead come from the prior path.
RegressionResult error_regression(const Checkpoint& ckpt, const Matrix& sequence,
                                  const RegressionConfig& config);

struct FixedWindowResult {
    AdaptiveVectors adaptive;  // N rows
    Matrix fitted;             // N x D
    Matrix continuation;       // H x D
    double window_mse = 0.0;
};

FixedWindowResult fixed_window_regression(const Checkpoint& ckpt, const Matrix& sequence,
                                          std::size_t window, std::size_t iterations,
                                          std::size_t horizon, const RegressionConfig& config);

// VRNN counterpart of error regression: the posterior filters observations up
// to e, then the model runs closed-loop for lookahead steps from X_e.
std::vector<PredictionRecord> vrnn_predict(const Checkpoint& ckpt, const Matrix& sequence,
                                           std::size_t lookahead, std::uint64_t seed,
                                           bool sample_prediction_noise = false);

}  // namespace pvrnn
