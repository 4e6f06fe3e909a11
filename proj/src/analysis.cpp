#include "pvrnn/analysis.h"

#include <algorithm>
#include <cmath>

namespace pvrnn {

std::size_t diverging_step(const Matrix& target, const Matrix& generated, const Discretizer& disc) {
    if (target.rows() != generated.rows() || target.cols() != generated.cols()) {
        throw Error(ErrorKind::shape, "diverging_step: target " + std::to_string(target.rows()) + "x" +
                                          std::to_string(target.cols()) + " vs generated " +
                                          std::to_string(generated.rows()) + "x" +
                                          std::to_string(generated.cols()));
    }
    const std::size_t T = target.rows();
    const std::size_t D = target.cols();
    for (std::size_t t = 0; t < T; ++t) {
        if (disc.mode == DivergenceMode::discrete) {
            for (std::size_t i = 0; i < D; ++i) {
                if ((target(t, i) >= disc.threshold) != (generated(t, i) >= disc.threshold)) return t + 1;
            }
        } else {
            double se = 0.0;
            for (std::size_t i = 0; i < D; ++i) {
                const double e = target(t, i) - generated(t, i);
                se += e * e;
            }
            if (se / static_cast<double>(D) > disc.mse_threshold) return t + 1;
        }
    }
    return T;
}

double average_diverging_step(const std::vector<Matrix>& targets,
                              const std::vector<std::vector<Matrix>>& regenerations,
                              const Discretizer& disc) {
    if (targets.size() != regenerations.size()) {
        throw Error(ErrorKind::shape, "average_diverging_step: " + std::to_string(targets.size()) +
                                          " targets but " + std::to_string(regenerations.size()) +
                                          " regeneration sets");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (const Matrix& g : regenerations[i]) {
            sum += static_cast<double>(diverging_step(targets[i], g, disc));
            ++count;
        }
    }
    if (count == 0) throw Error(ErrorKind::usage, "average_diverging_step: no regenerations");
    return sum / static_cast<double>(count);
}

double variance_of_divergence(const std::vector<Matrix>& runs) {
    if (runs.size() < 2) throw Error(ErrorKind::usage, "variance_of_divergence needs at least 2 runs");
    const std::size_t T = runs[0].rows();
    const std::size_t D = runs[0].cols();
    for (const Matrix& r : runs) {
        if (r.rows() != T || r.cols() != D) throw Error(ErrorKind::shape, "variance_of_divergence: run shapes differ");
    }
    if (T == 0 || D == 0) return 0.0;
    const double n = static_cast<double>(runs.size());
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < D; ++i) {
            // Shifted by the first run so identical runs give exactly zero.
            const double x0 = runs[0](t, i);
            double sum = 0.0, sq = 0.0;
            for (const Matrix& r : runs) {
                const double dx = r(t, i) - x0;
                sum += dx;
                sq += dx * dx;
            }
            total += sq / n - (sum / n) * (sum / n);
        }
    }
    return total / static_cast<double>(T * D);
}

std::vector<int> discretize(const Matrix& sequence, double threshold) {
    if (sequence.cols() != 1) throw Error(ErrorKind::usage, "discretize expects 1-D sequences");
    std::vector<int> out(sequence.rows());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = sequence(t, 0) >= threshold ? 1 : 0;
    return out;
}

NgramDistribution NgramDistribution::from_stream(const std::vector<int>& symbols, std::size_t n) {
    if (n == 0 || n > symbols.size()) {
        throw Error(ErrorKind::usage, "n-gram length " + std::to_string(n) + " exceeds stream length " +
                                          std::to_string(symbols.size()));
    }
    NgramDistribution d;
    d.n = n;
    d.total = symbols.size() - n + 1;
    std::map<std::vector<int>, std::size_t> counts;
    for (std::size_t t = 0; t < d.total; ++t) {
        ++counts[std::vector<int>(symbols.begin() + static_cast<std::ptrdiff_t>(t),
                                  symbols.begin() + static_cast<std::ptrdiff_t>(t + n))];
    }
    for (const auto& [gram, c] : counts) d.probability[gram] = static_cast<double>(c) / static_cast<double>(d.total);
    return d;
}

NgramKl ngram_kl(const NgramDistribution& reference, const NgramDistribution& generated) {
    if (reference.n != generated.n) throw Error(ErrorKind::usage, "n-gram lengths differ");
    if (generated.total == 0) throw Error(ErrorKind::usage, "generated distribution is empty");
    NgramKl out;
    out.floor = 1.0 / (2.0 * static_cast<double>(generated.total));
    for (const auto& [gram, p] : reference.probability) {
        auto it = generated.probability.find(gram);
        double q = out.floor;
        if (it != generated.probability.end()) {
            q = it->second;
        } else {
            ++out.floored;
        }
        out.value += p * std::log(p / q);
    }
    return out;
}

NgramKl ngram_kl(const std::vector<int>& reference, const std::vector<int>& generated, std::size_t n) {
    return ngram_kl(NgramDistribution::from_stream(reference, n), NgramDistribution::from_stream(generated, n));
}

double lyapunov_from_chain(std::span<const Matrix> chain, std::size_t transient,
                           std::span<const double> r0) {
    if (chain.size() <= transient) throw Error(ErrorKind::usage, "Jacobian chain shorter than the transient");
    Vector r(r0.begin(), r0.end());
    double norm0 = 0.0;
    for (double v : r) norm0 += v * v;
    norm0 = std::sqrt(norm0);
    if (norm0 == 0.0) throw Error(ErrorKind::usage, "initial direction must be nonzero");
    for (double& v : r) v /= norm0;
    double sum = 0.0;
    for (std::size_t t = 0; t < chain.size(); ++t) {
        const Matrix& J = chain[t];
        if (J.rows() != r.size() || J.cols() != r.size()) throw Error(ErrorKind::shape, "Jacobian chain is not square");
        Vector next(r.size(), 0.0);
        gemv_add(J, r, next);
        double norm = 0.0;
        for (double v : next) norm += v * v;
        norm = std::sqrt(norm);
        if (t >= transient) sum += std::log(norm);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = next[i] / norm;
    }
    return sum / static_cast<double>(chain.size() - transient);
}

namespace {

void require_single_layer(const NetworkConfig& config) {
    if (config.layers.size() != 1 || config.mode != Mode::pvrnn) {
        throw Error(ErrorKind::usage, "Lyapunov analysis supports single-layer pvrnn networks only");
    }
}

struct MapParts {
    Vector mu, log_sigma, log_sigma_raw, z, d_next;
};

MapParts map_parts(const Parameters& params, const NetworkConfig& config, std::span<const double> state,
                   std::span<const double> eps) {
    const std::size_t nz = config.layers[0].z_units;
    const std::size_t nd = config.layers[0].d_units;
    if (state.size() != nz + nd || eps.size() != nz) throw Error(ErrorKind::shape, "lyapunov map: state size mismatch");
    const LayerParameters& l = params.layers[0];
    std::span<const double> d = state.subspan(nz);
    MapParts p;
    p.mu.assign(l.prior_mu_b.values().begin(), l.prior_mu_b.values().end());
    p.log_sigma_raw.assign(l.prior_sigma_b.values().begin(), l.prior_sigma_b.values().end());
    gemv_add(l.prior_mu_w, d, p.mu);
    gemv_add(l.prior_sigma_w, d, p.log_sigma_raw);
    p.log_sigma.resize(nz);
    p.z.resize(nz);
    for (std::size_t j = 0; j < nz; ++j) {
        p.mu[j] = std::tanh(p.mu[j]);
        p.log_sigma[j] = clamp_log_sigma(p.log_sigma_raw[j]);
        p.z[j] = p.mu[j] + std::exp(p.log_sigma[j]) * eps[j];
    }
    const double tau = config.layers[0].tau;
    Vector u(l.b.values().begin(), l.b.values().end());
    gemv_add(l.w_dd, d, u);
    gemv_add(l.w_dz, p.z, u);
    p.d_next.resize(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        const double h = std::atanh(d[i]);
        p.d_next[i] = std::tanh((1.0 - 1.0 / tau) * h + u[i] / tau);
    }
    return p;
}

}  // namespace

Vector lyapunov_map(const Parameters& params, const NetworkConfig& config,
                    std::span<const double> state, std::span<const double> eps) {
    require_single_layer(config);
    MapParts p = map_parts(params, config, state, eps);
    Vector out = p.z;
    out.insert(out.end(), p.d_next.begin(), p.d_next.end());
    return out;
}

Matrix lyapunov_jacobian(const Parameters& params, const NetworkConfig& config,
                         std::span<const double> state, std::span<const double> eps) {
    require_single_layer(config);
    const std::size_t nz = config.layers[0].z_units;
    const std::size_t nd = config.layers[0].d_units;
    const LayerParameters& l = params.layers[0];
    const MapParts p = map_parts(params, config, state, eps);
    std::span<const double> d = state.subspan(nz);
    const double tau = config.layers[0].tau;

    // dZ'/dd = diag(1 - mu^2) W_mu + diag(sigma eps [unclamped]) W_sigma
    Matrix dz_dd(nz, nd);
    for (std::size_t j = 0; j < nz; ++j) {
        const double a = 1.0 - p.mu[j] * p.mu[j];
        const bool live = p.log_sigma_raw[j] > kLogSigmaMin && p.log_sigma_raw[j] < kLogSigmaMax;
        const double b = live ? std::exp(p.log_sigma[j]) * eps[j] : 0.0;
        for (std::size_t i = 0; i < nd; ++i) dz_dd(j, i) = a * l.prior_mu_w(j, i) + b * l.prior_sigma_w(j, i);
    }
    Matrix J(nz + nd, nz + nd);
    for (std::size_t j = 0; j < nz; ++j)
        for (std::size_t i = 0; i < nd; ++i) J(j, nz + i) = dz_dd(j, i);
    for (std::size_t r = 0; r < nd; ++r) {
        const double gate = 1.0 - p.d_next[r] * p.d_next[r];
        for (std::size_t i = 0; i < nd; ++i) {
            double v = l.w_dd(r, i);
            for (std::size_t j = 0; j < nz; ++j) v += l.w_dz(r, j) * dz_dd(j, i);
            v /= tau;
            if (i == r) v += (1.0 - 1.0 / tau) / (1.0 - d[i] * d[i]);
            J(nz + r, nz + i) = gate * v;
        }
    }
    return J;
}

double lyapunov_largest(const Checkpoint& ckpt, const LyapunovConfig& config) {
    const NetworkConfig& net = ckpt.network;
    require_single_layer(net);
    if (config.steps == 0) throw Error(ErrorKind::usage, "Lyapunov steps must be >= 1");
    const std::size_t nz = net.layers[0].z_units;
    const std::size_t nd = net.layers[0].d_units;
    RngStream rng = RngStream::derive(config.seed, {0});

    // First step from a random A_1 through the posterior head.
    AdaptiveVectors a1 = AdaptiveVectors::zeros(net, 1);
    for (double& v : a1.mu[0].values()) v = rng.gaussian();
    for (double& v : a1.log_sigma[0].values()) v = rng.gaussian();
    StepDrive drive;
    drive.source = LatentSource::posterior;
    drive.adaptive = &a1;
    const NoiseTable first = config.sampled_noise ? sample_noise(net, 1, rng) : zero_noise(net, 1);
    const StepRecord s1 = forward_step(ckpt.params, net, NetworkState::zeros(net), drive, first, 0);
    Vector state = s1.layers[0].z;
    state.insert(state.end(), s1.layers[0].d.begin(), s1.layers[0].d.end());

    Vector r = gaussian_sample(rng, nz + nd);
    double n0 = 0.0;
    for (double v : r) n0 += v * v;
    for (double& v : r) v /= std::sqrt(n0);

    Vector eps(nz, 0.0);
    double sum = 0.0;
    const std::size_t total = config.transient + config.steps;
    for (std::size_t t = 0; t < total; ++t) {
        if (config.sampled_noise)
            for (double& e : eps) e = rng.gaussian();
        const Matrix J = lyapunov_jacobian(ckpt.params, net, state, eps);
        Vector next(r.size(), 0.0);
        gemv_add(J, r, next);
        double norm = 0.0;
        for (double v : next) norm += v * v;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorKind::numeric, "Lyapunov tangent vector degenerated at step " + std::to_string(t + 1));
        if (t >= config.transient) sum += std::log(norm);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = next[i] / norm;
        state = lyapunov_map(ckpt.params, net, state, eps);
    }
    return sum / static_cast<double>(config.steps);
}

std::vector<double> prediction_mse(const std::vector<PredictionRecord>& records,
                                   const Matrix& targets, std::size_t max_k) {
    std::vector<double> sum(max_k, 0.0);
    std::vector<std::size_t> count(max_k, 0);
    for (const PredictionRecord& r : records) {
        if (r.k == 0 || r.k > max_k) continue;
        if (r.t == 0 || r.t > targets.rows() || r.prediction.size() != targets.cols()) {
            throw Error(ErrorKind::shape, "prediction record for t=" + std::to_string(r.t) + " is not aligned with the targets");
        }
        if (!r.target.empty() && !std::equal(r.target.begin(), r.target.end(), targets.row(r.t - 1).begin(),
                                             targets.row(r.t - 1).end())) {
            throw Error(ErrorKind::shape, "prediction record for t=" + std::to_string(r.t) + " carries a different target");
        }
        for (std::size_t i = 0; i < targets.cols(); ++i) {
            const double e = r.prediction[i] - targets(r.t - 1, i);
            sum[r.k - 1] += e * e;
        }
        count[r.k - 1] += targets.cols();
    }
    std::vector<double> out(max_k, 0.0);
    for (std::size_t k = 0; k < max_k; ++k) {
        if (count[k] == 0) throw Error(ErrorKind::usage, "no predictions at look-ahead " + std::to_string(k + 1));
        out[k] = sum[k] / static_cast<double>(count[k]);
    }
    return out;
}

double mean_prior_sigma(const Checkpoint& ckpt, const SequenceDataset& data, std::uint64_t seed) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        RngStream rng = RngStream::derive(seed, {i});
        const Matrix& target = data.sequences[i];
        const NoiseTable noise = sample_noise(ckpt.network, target.rows(), rng);
        Rollout tape;
        if (ckpt.network.mode == Mode::vrnn) {
            tape = vrnn_rollout(ckpt.params, ckpt.network, target, VrnnMode::posterior_driven, noise,
                                NetworkState::zeros(ckpt.network));
        } else {
            if (i >= ckpt.adaptive.size()) throw Error(ErrorKind::shape, "checkpoint has no A for sequence " + std::to_string(i));
            tape = rollout_posterior(ckpt.params, ckpt.network, ckpt.adaptive[i], noise, NetworkState::zeros(ckpt.network));
        }
        for (const StepRecord& s : tape.steps)
            for (const LayerStep& l : s.layers)
                for (double ls : l.prior.log_sigma) {
                    sum += std::exp(ls);
                    ++count;
                }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace pvrnn

namespace pvrnn {

Exp1Metrics exp1_metrics(const Checkpoint& ckpt, const SequenceDataset& train,
                         const AnalysisConfig& config, std::uint64_t seed) {
    if (train.dim != 1) throw Error(ErrorKind::usage, "exp1 metrics (n-gram KL) need 1-D data");
    if (ckpt.adaptive.size() != train.size()) throw Error(ErrorKind::shape, "checkpoint and dataset disagree on sequence count");
    Exp1Metrics m;
    const Discretizer disc;
    std::vector<std::vector<Matrix>> regenerations;
    double vd_sum = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        regenerations.push_back(regenerate_target(ckpt, i, config.regenerations, RngStream::derive(seed, {1}).seed()));
        vd_sum += variance_of_divergence(regenerate_target(ckpt, i, config.vd_runs, RngStream::derive(seed, {2}).seed()));
    }
    m.ads = average_diverging_step(train.sequences, regenerations, disc);
    m.vd = vd_sum / static_cast<double>(train.size());

    std::vector<int> reference;
    for (const Matrix& s : train.sequences) {
        const std::vector<int> sym = discretize(s);
        reference.insert(reference.end(), sym.begin(), sym.end());
    }
    const Matrix generated = free_generation(ckpt, config.free_steps, RngStream::derive(seed, {3}).seed());
    m.ngram = ngram_kl(reference, discretize(generated), config.ngram_n);
    return m;
}

std::vector<double> test_set_mse(const Checkpoint& ckpt, const std::vector<Matrix>& test,
                                 const RegressionConfig& regression, std::size_t lookahead) {
    if (test.empty()) throw Error(ErrorKind::usage, "no test sequences");
    std::vector<double> sum(lookahead, 0.0);
    std::vector<std::size_t> count(lookahead, 0);
    RegressionConfig rc = regression;
    rc.lookahead = lookahead;
    for (std::size_t s = 0; s < test.size(); ++s) {
        rc.seed = RngStream::derive(regression.seed, {s}).seed();
        const std::vector<PredictionRecord> records =
            ckpt.network.mode == Mode::vrnn
                ? vrnn_predict(ckpt, test[s], lookahead, rc.seed, rc.sample_prediction_noise)
                : error_regression(ckpt, test[s], rc).predictions;
        prediction_mse(records, test[s], lookahead);  // alignment check
        for (const PredictionRecord& r : records) {
            for (std::size_t i = 0; i < r.prediction.size(); ++i) {
                const double e = r.prediction[i] - test[s](r.t - 1, i);
                sum[r.k - 1] += e * e;
            }
            count[r.k - 1] += r.prediction.size();
        }
    }
    std::vector<double> out(lookahead);
    for (std::size_t k = 0; k < lookahead; ++k) out[k] = sum[k] / static_cast<double>(count[k]);
    return out;
}

Exp2Metrics exp2_metrics(const Checkpoint& ckpt, const SequenceDataset& train,
                         const std::vector<Matrix>& test, const RegressionConfig& regression,
                         const AnalysisConfig& config, std::uint64_t seed) {
    Exp2Metrics m;
    if (ckpt.network.mode == Mode::pvrnn) {
        Discretizer disc;
        disc.mode = DivergenceMode::continuous;
        disc.mse_threshold = config.mse_threshold;
        std::vector<std::vector<Matrix>> regenerations;
        for (std::size_t i = 0; i < train.size(); ++i) {
            regenerations.push_back(regenerate_target(ckpt, i, config.regenerations, RngStream::derive(seed, {1}).seed()));
        }
        m.ads = average_diverging_step(train.sequences, regenerations, disc);
    }
    m.mean_prior_sigma = mean_prior_sigma(ckpt, train, RngStream::derive(seed, {4}).seed());
    if (test.empty()) return m;
    const std::size_t n = std::min(config.test_sequences, test.size());
    m.mse = test_set_mse(ckpt, std::vector<Matrix>(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(n)),
                         regression, config.lookahead);
    return m;
}

}  // namespace pvrnn
