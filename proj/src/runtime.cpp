#include "pvrnn/runtime.h"

#include <algorithm>
#include <cmath>
#include <thread>

namespace pvrnn {

void TrainConfig::validate() const {
    if (!(w >= 0.0)) throw Error(ErrorKind::config, "training.w must be >= 0");
    if (history_every == 0) throw Error(ErrorKind::config, "training.history_every must be >= 1");
    if (threads == 0) throw Error(ErrorKind::config, "training.threads must be >= 1");
    if (!(adam.alpha > 0.0)) throw Error(ErrorKind::config, "training.alpha must be > 0");
}

void RegressionConfig::validate() const {
    if (window == 0) throw Error(ErrorKind::config, "regression.window must be >= 1");
    if (lookahead == 0) throw Error(ErrorKind::config, "regression.lookahead must be >= 1");
    if (stride == 0 || stride > window) {
        throw Error(ErrorKind::config, "regression.stride must be in [1, window]");
    }
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::config, "regression.learning_rate must be > 0");
    if (w && !(*w >= 0.0)) throw Error(ErrorKind::config, "regression.w must be >= 0");
}

namespace {

void check_dataset(const NetworkConfig& network, const SequenceDataset& data) {
    if (data.size() == 0) throw Error(ErrorKind::usage, "training dataset is empty");
    if (data.dim != network.output_dim) {
        throw Error(ErrorKind::shape, "dataset dim " + std::to_string(data.dim) +
                                          " does not match network output_dim " +
                                          std::to_string(network.output_dim));
    }
}

struct SequenceResult {
    LossBreakdown loss;
    GradientSet grad;
};

SequenceResult sequence_pass(const Checkpoint& ckpt, const SequenceDataset& data, std::size_t i,
                             std::uint64_t seed, std::uint64_t epoch, double w) {
    RngStream rng = RngStream::derive(seed, {1, epoch, i});
    const Matrix& target = data.sequences[i];
    const NoiseTable noise = sample_noise(ckpt.network, target.rows(), rng);
    const AdaptiveVectors empty;
    const AdaptiveVectors& a = ckpt.network.mode == Mode::pvrnn ? ckpt.adaptive[i] : empty;
    ElboResult e = elbo(ckpt.params, ckpt.network, a, target, w, noise, NetworkState::zeros(ckpt.network));
    SequenceResult r;
    r.grad = bptt_gradients(ckpt.params, ckpt.network, e.tape, target, w);
    r.loss = std::move(e.loss);
    return r;
}

}  // namespace

Checkpoint initialize_training(const NetworkConfig& network, const SequenceDataset& data,
                               const TrainConfig& config) {
    network.validate();
    config.validate();
    check_dataset(network, data);
    Checkpoint c;
    c.network = network;
    RngStream init = RngStream::derive(config.seed, {0});
    c.params = Parameters::initialize(network, init);
    if (network.mode == Mode::pvrnn) {
        for (const Matrix& s : data.sequences) c.adaptive.push_back(AdaptiveVectors::zeros(network, s.rows()));
    }
    c.adam = AdamState(config.adam);
    c.w = config.w;
    c.seed = config.seed;
    c.provenance = data.provenance;
    return c;
}

void train(Checkpoint& ckpt, const SequenceDataset& data, const TrainConfig& config,
           const TrainHooks& hooks) {
    config.validate();
    check_dataset(ckpt.network, data);
    if (ckpt.network.mode == Mode::pvrnn) {
        if (ckpt.adaptive.size() != data.size()) {
            throw Error(ErrorKind::shape, "checkpoint holds A for " + std::to_string(ckpt.adaptive.size()) +
                                              " sequences, dataset has " + std::to_string(data.size()));
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (ckpt.adaptive[i].length() != data.sequences[i].rows()) {
                throw Error(ErrorKind::shape, "sequence " + std::to_string(i) + " length differs from its A");
            }
        }
    }
    if (ckpt.w != config.w) {
        throw Error(ErrorKind::config, "checkpoint was trained with w=" + std::to_string(ckpt.w) +
                                           ", config asks for w=" + std::to_string(config.w));
    }
    if (ckpt.seed != config.seed) throw Error(ErrorKind::config, "checkpoint seed differs from training seed");

    const std::size_t n = data.size();
    const std::size_t threads = std::min(config.threads, n);
    std::vector<SequenceResult> results(n);

    for (std::uint64_t epoch = ckpt.epoch + 1; epoch <= config.epochs; ++epoch) {
        try {
            if (threads <= 1) {
                for (std::size_t i = 0; i < n; ++i) results[i] = sequence_pass(ckpt, data, i, config.seed, epoch, config.w);
            } else {
                std::vector<std::thread> pool;
                std::vector<std::exception_ptr> errors(threads);
                for (std::size_t w = 0; w < threads; ++w) {
                    pool.emplace_back([&, w] {
                        try {
                            for (std::size_t i = w; i < n; i += threads) {
                                results[i] = sequence_pass(ckpt, data, i, config.seed, epoch, config.w);
                            }
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                }
                for (auto& t : pool) t.join();
                for (auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }

            // Fixed-order reduction keeps the sum independent of scheduling.
            Parameters shared = std::move(results[0].grad.params);
            for (std::size_t i = 1; i < n; ++i) shared.add(results[i].grad.params);

            std::vector<ParamBlock> pblocks = ckpt.params.blocks();
            std::vector<GradBlock> gblocks = shared.grad_blocks();
            if (ckpt.network.mode == Mode::pvrnn) {
                for (std::size_t i = 0; i < n; ++i) {
                    const std::string prefix = "seq" + std::to_string(i) + ".";
                    auto pa = ckpt.adaptive[i].blocks(prefix);
                    auto ga = results[i].grad.adaptive.grad_blocks(prefix);
                    pblocks.insert(pblocks.end(), pa.begin(), pa.end());
                    gblocks.insert(gblocks.end(), ga.begin(), ga.end());
                }
            }
            adam_step(pblocks, gblocks, ckpt.adam);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::numeric) {
                throw Error(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            throw;
        }

        LossBreakdown sum;
        sum.w = config.w;
        for (const SequenceResult& r : results) {
            sum.likelihood += r.loss.likelihood;
            sum.kl += r.loss.kl;
            sum.total += r.loss.total;
            sum.steps += r.loss.steps;
        }
        sum.dim = ckpt.network.output_dim;
        ckpt.epoch = epoch;
        if (epoch % config.history_every == 0) ckpt.history.push_back({epoch, sum.likelihood, sum.kl, sum.total});
        if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && hooks.on_checkpoint) {
            hooks.on_checkpoint(ckpt);
        }
        if (hooks.on_epoch && !hooks.on_epoch(epoch, sum)) break;
    }
}

Checkpoint train(const NetworkConfig& network, const SequenceDataset& data,
                 const TrainConfig& config) {
    Checkpoint c = initialize_training(network, data, config);
    train(c, data, config);
    return c;
}

std::vector<Rollout> regenerate_rollouts(const Checkpoint& ckpt, std::size_t sequence,
                                         std::size_t repeats, std::uint64_t seed, bool zero_noise) {
    if (ckpt.network.mode != Mode::pvrnn) throw Error(ErrorKind::usage, "target regeneration needs a pvrnn checkpoint");
    if (sequence >= ckpt.adaptive.size()) {
        throw Error(ErrorKind::usage, "unknown sequence index " + std::to_string(sequence) + " (checkpoint has " +
                                          std::to_string(ckpt.adaptive.size()) + ")");
    }
    const AdaptiveVectors& a = ckpt.adaptive[sequence];
    const std::size_t T = a.length();
    Bootstrap boot;
    boot.adaptive = a.slice(0, 1);
    std::vector<Rollout> out;
    for (std::size_t r = 0; r < repeats; ++r) {
        RngStream rng = RngStream::derive(seed, {sequence, r});
        const NoiseTable noise = zero_noise ? pvrnn::zero_noise(ckpt.network, T) : sample_noise(ckpt.network, T, rng);
        out.push_back(rollout_prior(ckpt.params, ckpt.network, T, noise, boot, NetworkState::zeros(ckpt.network)));
    }
    return out;
}

std::vector<Matrix> regenerate_target(const Checkpoint& ckpt, std::size_t sequence,
                                      std::size_t repeats, std::uint64_t seed, bool zero_noise) {
    std::vector<Matrix> out;
    for (const Rollout& r : regenerate_rollouts(ckpt, sequence, repeats, seed, zero_noise)) out.push_back(r.outputs());
    return out;
}

Matrix free_generation(const Checkpoint& ckpt, std::size_t length, std::uint64_t seed) {
    RngStream rng = RngStream::derive(seed, {0});
    Bootstrap boot;
    if (ckpt.network.mode == Mode::pvrnn) {
        AdaptiveVectors a = AdaptiveVectors::zeros(ckpt.network, 1);
        for (std::size_t k = 0; k < a.layer_count(); ++k) {
            for (double& v : a.mu[k].values()) v = rng.gaussian();
            for (double& v : a.log_sigma[k].values()) v = rng.gaussian();
        }
        boot.adaptive = std::move(a);
    }
    return rollout_prior(ckpt.params, ckpt.network, length, rng, boot).outputs();
}

namespace {

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
    Matrix out(count, m.cols());
    for (std::size_t t = 0; t < count; ++t) std::copy_n(m.row(begin + t).begin(), m.cols(), out.row(t).begin());
    return out;
}

void check_sequence(const Checkpoint& ckpt, const Matrix& sequence) {
    if (sequence.cols() != ckpt.network.output_dim) {
        throw Error(ErrorKind::shape, "test sequence dim " + std::to_string(sequence.cols()) +
                                          " does not match network output_dim " +
                                          std::to_string(ckpt.network.output_dim));
    }
}

}  // namespace

RegressionResult error_regression(const Checkpoint& ckpt, const Matrix& sequence,
                                  const RegressionConfig& config) {
    config.validate();
    check_sequence(ckpt, sequence);
    if (ckpt.network.mode != Mode::pvrnn) throw Error(ErrorKind::usage, "error regression needs a pvrnn checkpoint");
    const std::size_t T = sequence.rows();
    const std::size_t m = config.window;
    if (m > T) {
        throw Error(ErrorKind::usage, "window " + std::to_string(m) + " exceeds sequence length " + std::to_string(T));
    }
    const NetworkConfig& net = ckpt.network;
    const double w = config.w.value_or(ckpt.w);
    AdamConfig row_cfg;
    row_cfg.alpha = config.learning_rate;

    RegressionResult result;
    result.adaptive = AdaptiveVectors::zeros(net, T);
    std::vector<AdamState> row_adam(T, AdamState(row_cfg));
    NetworkState committed = NetworkState::zeros(net);
    const GradientOptions a_only{false, true};

    for (std::size_t e = config.stride; e <= T; e += config.stride) {
        const std::size_t s = e >= m ? e - m + 1 : 1;  // 1-based window start
        const std::size_t len = e - s + 1;
        const Matrix target = rows_of(sequence, s - 1, len);
        AdaptiveVectors window = result.adaptive.slice(s - 1, len);

        for (std::size_t it = 0; it < config.iterations; ++it) {
            RngStream rng = RngStream::derive(config.seed, {e, it});
            const NoiseTable noise = sample_noise(net, len, rng);
            ElboResult r = elbo(ckpt.params, net, window, target, w, noise, committed);
            const GradientSet g = bptt_gradients(ckpt.params, net, r.tape, target, w, a_only);
            for (std::size_t row = 0; row < len; ++row) {
                std::vector<ParamBlock> pb = window.row_blocks(row);
                std::vector<GradBlock> gb = g.adaptive.row_grad_blocks(row);
                adam_step(pb, gb, row_adam[s - 1 + row]);
            }
        }
        result.adaptive.assign_rows(s - 1, window);

        RngStream final_rng = RngStream::derive(config.seed, {e, config.iterations});
        const NoiseTable final_noise = sample_noise(net, len, final_rng);
        const Rollout fit = rollout_posterior(ckpt.params, net, window, final_noise, committed);
        ++result.windows;

        const std::size_t horizon = std::min(config.lookahead, T - e);
        if (horizon > 0) {
            RngStream pred_rng = RngStream::derive(config.seed, {e, config.iterations + 1});
            const NoiseTable pred_noise = config.sample_prediction_noise
                                              ? sample_noise(net, horizon, pred_rng)
                                              : zero_noise(net, horizon);
            const Rollout pred = rollout_prior(ckpt.params, net, horizon, pred_noise, {}, fit.state_at(len));
            for (std::size_t k = 1; k <= horizon; ++k) {
                PredictionRecord rec;
                rec.t = e + k;
                rec.k = k;
                rec.prediction = pred.steps[k - 1].x;
                auto row = sequence.row(e + k - 1);
                rec.target.assign(row.begin(), row.end());
                result.predictions.push_back(std::move(rec));
            }
        }

        const std::size_t next_e = e + config.stride;
        const std::size_t next_s = next_e >= m ? next_e - m + 1 : 1;
        committed = fit.state_at(next_s - s);
    }
    return result;
}

FixedWindowResult fixed_window_regression(const Checkpoint& ckpt, const Matrix& sequence,
                                          std::size_t window, std::size_t iterations,
                                          std::size_t horizon, const RegressionConfig& config) {
    check_sequence(ckpt, sequence);
    if (ckpt.network.mode != Mode::pvrnn) throw Error(ErrorKind::usage, "error regression needs a pvrnn checkpoint");
    if (window == 0 || window > sequence.rows()) {
        throw Error(ErrorKind::usage, "window " + std::to_string(window) + " must be in [1, " +
                                          std::to_string(sequence.rows()) + "]");
    }
    const NetworkConfig& net = ckpt.network;
    const double w = config.w.value_or(ckpt.w);
    AdamConfig cfg;
    cfg.alpha = config.learning_rate;
    AdamState adam(cfg);
    const Matrix target = rows_of(sequence, 0, window);
    const NetworkState start = NetworkState::zeros(net);

    FixedWindowResult out;
    out.adaptive = AdaptiveVectors::zeros(net, window);
    for (std::size_t it = 0; it < iterations; ++it) {
        RngStream rng = RngStream::derive(config.seed, {0, it});
        const NoiseTable noise = sample_noise(net, window, rng);
        ElboResult r = elbo(ckpt.params, net, out.adaptive, target, w, noise, start);
        const GradientSet g = bptt_gradients(ckpt.params, net, r.tape, target, w, {false, true});
        adam_step(out.adaptive.blocks(""), g.adaptive.grad_blocks(""), adam);
    }
    RngStream final_rng = RngStream::derive(config.seed, {0, iterations});
    const NoiseTable final_noise = sample_noise(net, window, final_rng);
    const ElboResult fit = elbo(ckpt.params, net, out.adaptive, target, w, final_noise, start);
    out.fitted = fit.tape.outputs();
    out.window_mse = fit.loss.mse();

    if (horizon > 0) {
        RngStream pred_rng = RngStream::derive(config.seed, {1});
        const NoiseTable noise = config.sample_prediction_noise ? sample_noise(net, horizon, pred_rng)
                                                                : zero_noise(net, horizon);
        out.continuation = rollout_prior(ckpt.params, net, horizon, noise, {}, fit.tape.state_at(window)).outputs();
    } else {
        out.continuation = Matrix(0, net.output_dim);
    }
    return out;
}

std::vector<PredictionRecord> vrnn_predict(const Checkpoint& ckpt, const Matrix& sequence,
                                           std::size_t lookahead, std::uint64_t seed,
                                           bool sample_prediction_noise) {
    check_sequence(ckpt, sequence);
    if (ckpt.network.mode != Mode::vrnn) throw Error(ErrorKind::usage, "vrnn_predict needs a vrnn checkpoint");
    if (lookahead == 0) throw Error(ErrorKind::config, "lookahead must be >= 1");
    const NetworkConfig& net = ckpt.network;
    const std::size_t T = sequence.rows();
    RngStream rng = RngStream::derive(seed, {0});
    const NoiseTable noise = sample_noise(net, T, rng);
    const Rollout filter = vrnn_rollout(ckpt.params, net, sequence, VrnnMode::posterior_driven, noise,
                                        NetworkState::zeros(net));
    std::vector<PredictionRecord> out;
    for (std::size_t e = 1; e < T; ++e) {
        const std::size_t horizon = std::min(lookahead, T - e);
        RngStream pred_rng = RngStream::derive(seed, {1, e});
        const NoiseTable pn = sample_prediction_noise ? sample_noise(net, horizon, pred_rng) : zero_noise(net, horizon);
        const Rollout pred = rollout_prior(ckpt.params, net, horizon, pn, {}, filter.state_at(e), sequence.row(e - 1));
        for (std::size_t k = 1; k <= horizon; ++k) {
            PredictionRecord rec;
            rec.t = e + k;
            rec.k = k;
            rec.prediction = pred.steps[k - 1].x;
            auto row = sequence.row(e + k - 1);
            rec.target.assign(row.begin(), row.end());
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace pvrnn
