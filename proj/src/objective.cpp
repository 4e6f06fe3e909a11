#include "pvrnn/objective.h"

#include <algorithm>
#include <cmath>

namespace pvrnn {

namespace {

bool is_posterior(LatentSource s) {
    return s == LatentSource::posterior || s == LatentSource::observation_posterior;
}

// d clamp(x) / dx, zero outside the open range.
double clamp_gate(double raw) { return raw > kLogSigmaMin && raw < kLogSigmaMax ? 1.0 : 0.0; }

}  // namespace

Vector kl_gaussians(std::span<const double> mu_q, std::span<const double> sigma_q,
                    std::span<const double> mu_p, std::span<const double> sigma_p) {
    const std::size_t n = mu_q.size();
    if (sigma_q.size() != n || mu_p.size() != n || sigma_p.size() != n) {
        throw Error(ErrorKind::shape, "kl_gaussians: size mismatch");
    }
    Vector out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(sigma_q[i] > 0.0) || !(sigma_p[i] > 0.0)) {
            throw Error(ErrorKind::numeric, "kl_gaussians: non-positive sigma at index " + std::to_string(i));
        }
        const double diff = mu_p[i] - mu_q[i];
        out[i] = std::log(sigma_p[i] / sigma_q[i]) +
                 (diff * diff + sigma_q[i] * sigma_q[i]) / (2.0 * sigma_p[i] * sigma_p[i]) - 0.5;
    }
    return out;
}

double kl_gaussian_log(double mu_q, double log_sigma_q, double mu_p, double log_sigma_p) {
    const double diff = mu_p - mu_q;
    const double ratio = std::exp(2.0 * (log_sigma_q - log_sigma_p));
    return log_sigma_p - log_sigma_q + 0.5 * diff * diff * std::exp(-2.0 * log_sigma_p) +
           0.5 * ratio - 0.5;
}

double LossBreakdown::mse() const {
    return steps == 0 ? 0.0 : -2.0 * likelihood / static_cast<double>(steps);
}

LossBreakdown evaluate_loss(const NetworkConfig& config, const Rollout& tape,
                            const Matrix& targets, double w) {
    if (targets.rows() != tape.length() || (tape.length() > 0 && targets.cols() != config.output_dim)) {
        throw Error(ErrorKind::shape, "loss: tape covers " + std::to_string(tape.length()) +
                                          " steps, targets " + std::to_string(targets.rows()));
    }
    LossBreakdown loss;
    loss.w = w;
    loss.steps = tape.length();
    loss.dim = config.output_dim;
    loss.kl_per_step = Matrix(tape.length(), config.layers.size());
    const double inv_d = 1.0 / static_cast<double>(config.output_dim);
    double kl_raw = 0.0;
    for (std::size_t t = 0; t < tape.length(); ++t) {
        const StepRecord& step = tape.steps[t];
        double se = 0.0;
        for (std::size_t i = 0; i < step.x.size(); ++i) {
            const double e = step.x[i] - targets(t, i);
            se += e * e;
        }
        loss.likelihood -= 0.5 * inv_d * se;
        if (!is_posterior(step.source)) continue;
        for (std::size_t k = 0; k < step.layers.size(); ++k) {
            const LayerStep& l = step.layers[k];
            double sum = 0.0;
            for (std::size_t j = 0; j < l.z.size(); ++j) {
                sum += kl_gaussian_log(l.posterior.mu[j], l.posterior.log_sigma[j], l.prior.mu[j],
                                       l.prior.log_sigma[j]);
            }
            loss.kl_per_step(t, k) = sum;
            kl_raw += sum;
        }
    }
    loss.kl = kl_raw / static_cast<double>(config.total_z());
    loss.total = loss.likelihood - w * loss.kl;
    if (!std::isfinite(loss.total)) throw Error(ErrorKind::numeric, "loss is not finite");
    return loss;
}

ElboResult elbo(const Parameters& params, const NetworkConfig& config,
                const AdaptiveVectors& adaptive, const Matrix& targets, double w,
                const NoiseTable& noise, const NetworkState& initial) {
    if (w < 0.0) throw Error(ErrorKind::config, "meta-prior w must be >= 0");
    ElboResult r;
    if (config.mode == Mode::vrnn) {
        r.tape = vrnn_rollout(params, config, targets, VrnnMode::posterior_driven, noise, initial);
    } else {
        if (adaptive.length() != targets.rows()) {
            throw Error(ErrorKind::shape, "elbo: adaptive vectors cover " + std::to_string(adaptive.length()) +
                                              " steps, target has " + std::to_string(targets.rows()));
        }
        r.tape = rollout_posterior(params, config, adaptive, noise, initial);
    }
    r.loss = evaluate_loss(config, r.tape, targets, w);
    return r;
}

ElboResult elbo(const Parameters& params, const NetworkConfig& config,
                const AdaptiveVectors& adaptive, const Matrix& targets, double w, RngStream& rng) {
    const NoiseTable noise = sample_noise(config, targets.rows(), rng);
    return elbo(params, config, adaptive, targets, w, noise, NetworkState::zeros(config));
}

GradientSet bptt_gradients(const Parameters& params, const NetworkConfig& config,
                           const Rollout& tape, const Matrix& targets, double w,
                           const GradientOptions& options) {
    const std::size_t T = tape.length();
    const std::size_t L = config.layers.size();
    if (targets.rows() != T) throw Error(ErrorKind::shape, "bptt: target length does not match tape");

    GradientSet g;
    if (options.parameters) g.params = Parameters::zeros(config);
    if (config.mode == Mode::pvrnn && options.adaptive) g.adaptive = AdaptiveVectors::zeros(config, T);
    const bool want_p = options.parameters;
    const double inv_d = 1.0 / static_cast<double>(config.output_dim);
    const double c = w / static_cast<double>(config.total_z());

    std::vector<Vector> gd_next(L), gh_carry(L);
    for (std::size_t k = 0; k < L; ++k) {
        gd_next[k].assign(config.layers[k].d_units, 0.0);
        gh_carry[k].assign(config.layers[k].d_units, 0.0);
    }
    std::vector<Vector> gd_prev(L), gz(L);

    for (std::size_t tt = T; tt-- > 0;) {
        const StepRecord& step = tape.steps[tt];
        if (!is_posterior(step.source)) {
            throw Error(ErrorKind::usage, "bptt: step " + std::to_string(tt + 1) + " is not posterior-driven");
        }
        const NetworkState prev = tape.state_at(tt);

        for (std::size_t k = 0; k < L; ++k) {
            gd_prev[k].assign(config.layers[k].d_units, 0.0);
            gz[k].assign(config.layers[k].z_units, 0.0);
        }

        // Output head.
        Vector go(config.output_dim);
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double x = step.x[i];
            go[i] = -(x - targets(tt, i)) * inv_d * (1.0 - x * x);
        }
        Vector gd0 = gd_next[0];
        gemv_transposed_add(params.out_w_d, go, gd0);
        if (config.output_uses_z) gemv_transposed_add(params.out_w_z, go, gz[0]);
        if (want_p) {
            outer_add(g.params.out_w_d, go, step.layers[0].d);
            if (config.output_uses_z) outer_add(g.params.out_w_z, go, step.layers[0].z);
            for (std::size_t i = 0; i < go.size(); ++i) g.params.out_b(i, 0) += go[i];
        }

        // Deterministic units.
        for (std::size_t k = 0; k < L; ++k) {
            const LayerStep& ls = step.layers[k];
            const LayerParameters& lp = params.layers[k];
            const double tau = config.layers[k].tau;
            const Vector& gd = k == 0 ? gd0 : gd_next[k];
            Vector gu(ls.d.size());
            for (std::size_t i = 0; i < gu.size(); ++i) {
                const double gh = gh_carry[k][i] + gd[i] * (1.0 - ls.d[i] * ls.d[i]);
                gu[i] = gh / tau;
                gh_carry[k][i] = gh * (1.0 - 1.0 / tau);
            }
            gemv_transposed_add(lp.w_dd, gu, gd_prev[k]);
            gemv_transposed_add(lp.w_dz, gu, gz[k]);
            if (k + 1 < L) gemv_transposed_add(lp.w_above, gu, gd_prev[k + 1]);
            if (k > 0) gemv_transposed_add(lp.w_below, gu, gd_prev[k - 1]);
            if (want_p) {
                LayerParameters& gl = g.params.layers[k];
                outer_add(gl.w_dd, gu, prev.d[k]);
                outer_add(gl.w_dz, gu, ls.z);
                if (k + 1 < L) outer_add(gl.w_above, gu, prev.d[k + 1]);
                if (k > 0) outer_add(gl.w_below, gu, prev.d[k - 1]);
                for (std::size_t i = 0; i < gu.size(); ++i) gl.b(i, 0) += gu[i];
                if (k == 0 && config.mode == Mode::vrnn && !step.input.empty()) {
                    outer_add(g.params.in_w_u, gu, step.input);
                }
            }
        }

        // Latent units: reparameterization plus the KL term.
        for (std::size_t k = 0; k < L; ++k) {
            const LayerStep& ls = step.layers[k];
            const LayerParameters& lp = params.layers[k];
            const std::size_t zn = ls.z.size();
            Vector ga_mu(zn), ga_sigma(zn), gp_mu(zn), gp_sigma(zn);
            for (std::size_t j = 0; j < zn; ++j) {
                const double mq = ls.posterior.mu[j];
                const double mp = ls.prior.mu[j];
                const double sq = std::exp(ls.posterior.log_sigma[j]);
                const double sp = std::exp(ls.prior.log_sigma[j]);
                const double inv_vp = 1.0 / (sp * sp);
                const double diff = mq - mp;

                const double g_mu_q = gz[k][j] - c * diff * inv_vp;
                const double g_ls_q = gz[k][j] * sq * ls.eps[j] - c * (-1.0 + sq * sq * inv_vp);
                const double g_mu_p = -c * (-diff) * inv_vp;
                const double g_ls_p = -c * (1.0 - (diff * diff + sq * sq) * inv_vp);

                ga_mu[j] = g_mu_q * (1.0 - mq * mq);
                ga_sigma[j] = g_ls_q * clamp_gate(ls.posterior.log_sigma_raw[j]);
                gp_mu[j] = g_mu_p * (1.0 - mp * mp);
                gp_sigma[j] = g_ls_p * clamp_gate(ls.prior.log_sigma_raw[j]);
            }

            if (step.source == LatentSource::posterior && options.adaptive && !g.adaptive.mu.empty()) {
                std::copy(ga_mu.begin(), ga_mu.end(), g.adaptive.mu[k].row(tt).begin());
                std::copy(ga_sigma.begin(), ga_sigma.end(), g.adaptive.log_sigma[k].row(tt).begin());
            }
            if (!lp.post_mu_w.empty()) {
                gemv_transposed_add(lp.post_mu_w, ga_mu, gd_prev[k]);
                gemv_transposed_add(lp.post_sigma_w, ga_sigma, gd_prev[k]);
            }
            gemv_transposed_add(lp.prior_mu_w, gp_mu, gd_prev[k]);
            gemv_transposed_add(lp.prior_sigma_w, gp_sigma, gd_prev[k]);

            if (want_p) {
                LayerParameters& gl = g.params.layers[k];
                if (!lp.post_mu_w.empty()) {
                    outer_add(gl.post_mu_w, ga_mu, prev.d[k]);
                    outer_add(gl.post_sigma_w, ga_sigma, prev.d[k]);
                }
                if (step.source == LatentSource::observation_posterior) {
                    std::span<const double> obs = targets.row(tt);
                    outer_add(gl.post_mu_x, ga_mu, obs);
                    outer_add(gl.post_sigma_x, ga_sigma, obs);
                    for (std::size_t j = 0; j < zn; ++j) {
                        gl.post_mu_b(j, 0) += ga_mu[j];
                        gl.post_sigma_b(j, 0) += ga_sigma[j];
                    }
                }
                outer_add(gl.prior_mu_w, gp_mu, prev.d[k]);
                outer_add(gl.prior_sigma_w, gp_sigma, prev.d[k]);
                for (std::size_t j = 0; j < zn; ++j) {
                    gl.prior_mu_b(j, 0) += gp_mu[j];
                    gl.prior_sigma_b(j, 0) += gp_sigma[j];
                }
            }
        }

        gd_next.swap(gd_prev);
    }
    return g;
}

double FdReport::max_relative_error() const {
    double m = 0.0;
    for (const auto& [name, r] : groups) m = std::max(m, r.max_relative_error);
    return m;
}

std::size_t FdReport::checked() const {
    std::size_t n = 0;
    for (const auto& [name, r] : groups) n += r.checked;
    return n;
}

namespace {

struct Coordinate {
    std::string group;
    std::string label;
    double* value;
    double analytic;
};

}  // namespace

FdReport finite_diff_check(const Parameters& params, const NetworkConfig& config,
                           const AdaptiveVectors& adaptive, const Matrix& targets, double w,
                           const NoiseTable& noise, const FdOptions& options) {
    Parameters p = params;
    AdaptiveVectors a = adaptive;
    const NetworkState initial = NetworkState::zeros(config);
    const ElboResult base = elbo(p, config, a, targets, w, noise, initial);
    const GradientSet grad = bptt_gradients(p, config, base.tape, targets, w);

    std::vector<Coordinate> coords;
    {
        std::vector<GradBlock> gblocks = grad.params.grad_blocks();
        std::size_t bi = 0;
        p.for_each_block([&](const std::string& name, Matrix& m) {
            const std::string group = parameter_group(name);
            for (std::size_t j = 0; j < m.size(); ++j) {
                coords.push_back({group, name + "[" + std::to_string(j) + "]", &m.values()[j],
                                  gblocks[bi].values[j]});
            }
            ++bi;
        });
    }
    if (config.mode == Mode::pvrnn) {
        for (std::size_t k = 0; k < a.layer_count(); ++k) {
            for (std::size_t j = 0; j < a.mu[k].size(); ++j) {
                const std::string idx = std::to_string(k) + "[" + std::to_string(j) + "]";
                coords.push_back({"A_mu", "A_mu." + idx, &a.mu[k].values()[j], grad.adaptive.mu[k].values()[j]});
                coords.push_back({"A_sigma", "A_sigma." + idx, &a.log_sigma[k].values()[j],
                                  grad.adaptive.log_sigma[k].values()[j]});
            }
        }
    }

    if (options.coordinates > 0 && options.coordinates < coords.size()) {
        RngStream rng(options.seed);
        // Partial Fisher-Yates; keeps the sample reproducible for a given seed.
        for (std::size_t i = 0; i < options.coordinates; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(coords.size() - i));
            std::swap(coords[i], coords[std::min(j, coords.size() - 1)]);
        }
        coords.resize(options.coordinates);
    }

    FdReport report;
    const double h = options.step;
    for (const Coordinate& c : coords) {
        const double saved = *c.value;
        *c.value = saved + h;
        const double up = elbo(p, config, a, targets, w, noise, initial).loss.total;
        *c.value = saved - h;
        const double down = elbo(p, config, a, targets, w, noise, initial).loss.total;
        *c.value = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max(std::abs(numeric), std::abs(c.analytic));
        double rel = 0.0;
        if (scale >= options.zero_threshold) rel = std::abs(numeric - c.analytic) / scale;
        FdGroupReport& g = report.groups[c.group];
        ++g.checked;
        if (rel > g.max_relative_error || g.worst_coordinate.empty()) {
            g.max_relative_error = rel;
            g.worst_coordinate = c.label;
        }
    }
    return report;
}

}  // namespace pvrnn
