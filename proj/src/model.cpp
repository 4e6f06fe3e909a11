#include "pvrnn/model.h"

#include <algorithm>
#include <cmath>

namespace pvrnn {

const char* mode_name(Mode mode) { return mode == Mode::vrnn ? "vrnn" : "pvrnn"; }

Mode parse_mode(const std::string& name) {
    if (name == "pvrnn") return Mode::pvrnn;
    if (name == "vrnn") return Mode::vrnn;
    throw Error(ErrorKind::config, "unknown mode '" + name + "' (expected pvrnn|vrnn)");
}

void NetworkConfig::validate() const {
    if (layers.empty() || layers.size() > 3) {
        throw Error(ErrorKind::config, "network: 1 to 3 layers supported, got " +
                                           std::to_string(layers.size()));
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const LayerSpec& l = layers[k];
        if (l.d_units == 0) throw Error(ErrorKind::config, "network: layer " + std::to_string(k) + " has no d units");
        if (l.z_units == 0) throw Error(ErrorKind::config, "network: layer " + std::to_string(k) + " has no z units");
        if (!(l.tau >= 1.0)) throw Error(ErrorKind::config, "network: layer " + std::to_string(k) + " has tau < 1");
    }
    if (output_dim == 0) throw Error(ErrorKind::config, "network: output_dim must be >= 1");
}

std::size_t NetworkConfig::total_z() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.z_units;
    return n;
}

std::size_t NetworkConfig::total_d() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.d_units;
    return n;
}

Parameters Parameters::zeros(const NetworkConfig& config) {
    config.validate();
    Parameters p;
    const std::size_t n_layers = config.layers.size();
    const std::size_t out = config.output_dim;
    const bool vrnn = config.mode == Mode::vrnn;
    p.layers.resize(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
        const std::size_t d = config.layers[k].d_units;
        const std::size_t z = config.layers[k].z_units;
        LayerParameters& l = p.layers[k];
        l.w_dd = Matrix(d, d);
        l.w_dz = Matrix(d, z);
        if (k + 1 < n_layers) l.w_above = Matrix(d, config.layers[k + 1].d_units);
        if (k > 0) l.w_below = Matrix(d, config.layers[k - 1].d_units);
        l.b = Matrix(d, 1);
        l.prior_mu_w = Matrix(z, d);
        l.prior_mu_b = Matrix(z, 1);
        l.prior_sigma_w = Matrix(z, d);
        l.prior_sigma_b = Matrix(z, 1);
        if (config.posterior_uses_d) {
            l.post_mu_w = Matrix(z, d);
            l.post_sigma_w = Matrix(z, d);
        }
        if (vrnn) {
            l.post_mu_x = Matrix(z, out);
            l.post_sigma_x = Matrix(z, out);
            l.post_mu_b = Matrix(z, 1);
            l.post_sigma_b = Matrix(z, 1);
        }
    }
    p.out_w_d = Matrix(out, config.layers[0].d_units);
    p.out_w_z = Matrix(out, config.output_uses_z ? config.layers[0].z_units : 0);
    p.out_b = Matrix(out, 1);
    if (vrnn) p.in_w_u = Matrix(config.layers[0].d_units, out);
    return p;
}

Parameters Parameters::initialize(const NetworkConfig& config, RngStream& rng) {
    Parameters p = zeros(config);
    p.for_each_block([&rng](const std::string& name, Matrix& m) {
        const bool bias = m.cols() == 1 && (name.ends_with(".b") || name.ends_with("_b"));
        if (bias) return;
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (double& v : m.values()) v = limit * (2.0 * rng.uniform() - 1.0);
    });
    return p;
}

std::vector<ParamBlock> Parameters::blocks() {
    std::vector<ParamBlock> out;
    for_each_block([&out](const std::string& name, Matrix& m) {
        out.push_back({name, m.values()});
    });
    return out;
}

std::vector<GradBlock> Parameters::grad_blocks() const {
    std::vector<GradBlock> out;
    for_each_block([&out](const std::string& name, const Matrix& m) {
        out.push_back({name, m.values()});
    });
    return out;
}

std::size_t Parameters::parameter_count() const {
    std::size_t n = 0;
    for_each_block([&n](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
}

void Parameters::set_zero() {
    for_each_block([](const std::string&, Matrix& m) { m.fill(0.0); });
}

void Parameters::add(const Parameters& other) {
    std::vector<GradBlock> src = other.grad_blocks();
    std::size_t i = 0;
    for_each_block([&](const std::string& name, Matrix& m) {
        if (i >= src.size() || src[i].values.size() != m.size()) {
            throw Error(ErrorKind::shape, "parameter add: layout mismatch at " + name);
        }
        auto dst = m.values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[i].values[j];
        ++i;
    });
    if (i != src.size()) throw Error(ErrorKind::shape, "parameter add: block count mismatch");
}

bool Parameters::all_finite() const {
    bool ok = true;
    for_each_block([&ok](const std::string&, const Matrix& m) {
        ok = ok && pvrnn::all_finite(m.values());
    });
    return ok;
}

bool Parameters::operator==(const Parameters& other) const {
    std::vector<GradBlock> a = grad_blocks();
    std::vector<GradBlock> b = other.grad_blocks();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name) return false;
        if (!std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin(),
                        b[i].values.end()))
            return false;
    }
    return true;
}

std::string parameter_group(const std::string& block_name) {
    if (block_name.starts_with("out.")) return "theta_X";
    const auto dot = block_name.find('.');
    const std::string leaf = dot == std::string::npos ? block_name : block_name.substr(dot + 1);
    if (leaf.starts_with("prior_")) return "theta_Z";
    if (leaf.starts_with("post_")) return "phi";
    return "theta_d";
}

AdaptiveVectors AdaptiveVectors::zeros(const NetworkConfig& config, std::size_t length) {
    AdaptiveVectors a;
    for (const auto& l : config.layers) {
        a.mu.emplace_back(length, l.z_units);
        a.log_sigma.emplace_back(length, l.z_units);
    }
    return a;
}

std::size_t AdaptiveVectors::length() const { return mu.empty() ? 0 : mu.front().rows(); }

AdaptiveVectors AdaptiveVectors::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > length()) {
        throw Error(ErrorKind::shape, "adaptive slice [" + std::to_string(begin) + ", " +
                                          std::to_string(begin + count) + ") exceeds length " +
                                          std::to_string(length()));
    }
    AdaptiveVectors out;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const std::size_t z = mu[k].cols();
        Matrix m(count, z), s(count, z);
        for (std::size_t t = 0; t < count; ++t) {
            std::copy_n(mu[k].row(begin + t).begin(), z, m.row(t).begin());
            std::copy_n(log_sigma[k].row(begin + t).begin(), z, s.row(t).begin());
        }
        out.mu.push_back(std::move(m));
        out.log_sigma.push_back(std::move(s));
    }
    return out;
}

void AdaptiveVectors::assign_rows(std::size_t begin, const AdaptiveVectors& rows) {
    if (rows.layer_count() != layer_count() || begin + rows.length() > length()) {
        throw Error(ErrorKind::shape, "adaptive assign_rows: out of range");
    }
    for (std::size_t k = 0; k < mu.size(); ++k) {
        for (std::size_t t = 0; t < rows.length(); ++t) {
            std::copy_n(rows.mu[k].row(t).begin(), mu[k].cols(), mu[k].row(begin + t).begin());
            std::copy_n(rows.log_sigma[k].row(t).begin(), log_sigma[k].cols(),
                        log_sigma[k].row(begin + t).begin());
        }
    }
}

void AdaptiveVectors::set_zero() {
    for (auto& m : mu) m.fill(0.0);
    for (auto& m : log_sigma) m.fill(0.0);
}

void AdaptiveVectors::add(const AdaptiveVectors& other) {
    if (other.layer_count() != layer_count()) throw Error(ErrorKind::shape, "adaptive add: layer mismatch");
    for (std::size_t k = 0; k < mu.size(); ++k) {
        if (other.mu[k].size() != mu[k].size()) throw Error(ErrorKind::shape, "adaptive add: size mismatch");
        for (std::size_t j = 0; j < mu[k].size(); ++j) {
            mu[k].values()[j] += other.mu[k].values()[j];
            log_sigma[k].values()[j] += other.log_sigma[k].values()[j];
        }
    }
}

bool AdaptiveVectors::all_finite() const {
    for (std::size_t k = 0; k < mu.size(); ++k)
        if (!pvrnn::all_finite(mu[k].values()) || !pvrnn::all_finite(log_sigma[k].values()))
            return false;
    return true;
}

std::vector<ParamBlock> AdaptiveVectors::blocks(const std::string& prefix) {
    std::vector<ParamBlock> out;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        out.push_back({prefix + "A_mu." + std::to_string(k), mu[k].values()});
        out.push_back({prefix + "A_sigma." + std::to_string(k), log_sigma[k].values()});
    }
    return out;
}

std::vector<GradBlock> AdaptiveVectors::grad_blocks(const std::string& prefix) const {
    std::vector<GradBlock> out;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        out.push_back({prefix + "A_mu." + std::to_string(k), mu[k].values()});
        out.push_back({prefix + "A_sigma." + std::to_string(k), log_sigma[k].values()});
    }
    return out;
}

std::vector<ParamBlock> AdaptiveVectors::row_blocks(std::size_t t) {
    std::vector<ParamBlock> out;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        out.push_back({"A_mu", mu[k].row(t)});
        out.push_back({"A_sigma", log_sigma[k].row(t)});
    }
    return out;
}

std::vector<GradBlock> AdaptiveVectors::row_grad_blocks(std::size_t t) const {
    std::vector<GradBlock> out;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        out.push_back({"A_mu", mu[k].row(t)});
        out.push_back({"A_sigma", log_sigma[k].row(t)});
    }
    return out;
}

NoiseTable sample_noise(const NetworkConfig& config, std::size_t length, RngStream& rng) {
    NoiseTable table;
    for (const auto& l : config.layers) table.emplace_back(length, l.z_units);
    for (std::size_t t = 0; t < length; ++t)
        for (auto& m : table)
            for (double& v : m.row(t)) v = rng.gaussian();
    return table;
}

NoiseTable zero_noise(const NetworkConfig& config, std::size_t length) {
    NoiseTable table;
    for (const auto& l : config.layers) table.emplace_back(length, l.z_units);
    return table;
}

NetworkState NetworkState::zeros(const NetworkConfig& config) {
    NetworkState s;
    for (const auto& l : config.layers) {
        s.h.emplace_back(l.d_units, 0.0);
        s.d.emplace_back(l.d_units, 0.0);
    }
    return s;
}

Vector GaussianParams::sigma() const {
    Vector s(log_sigma.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(log_sigma[i]);
    return s;
}

NetworkState Rollout::state_at(std::size_t steps_done) const {
    if (steps_done == 0) return initial;
    if (steps_done > steps.size()) throw Error(ErrorKind::shape, "rollout state index out of range");
    NetworkState s;
    for (const LayerStep& l : steps[steps_done - 1].layers) {
        s.h.push_back(l.h);
        s.d.push_back(l.d);
    }
    return s;
}

Matrix Rollout::outputs() const {
    const std::size_t dim = steps.empty() ? 0 : steps.front().x.size();
    Matrix out(steps.size(), dim);
    for (std::size_t t = 0; t < steps.size(); ++t) std::copy(steps[t].x.begin(), steps[t].x.end(), out.row(t).begin());
    return out;
}

namespace {

void check_state(const NetworkConfig& config, const NetworkState& s) {
    if (s.h.size() != config.layers.size() || s.d.size() != config.layers.size()) {
        throw Error(ErrorKind::shape, "network state has wrong layer count");
    }
    for (std::size_t k = 0; k < config.layers.size(); ++k) {
        if (s.h[k].size() != config.layers[k].d_units || s.d[k].size() != config.layers[k].d_units) {
            throw Error(ErrorKind::shape, "network state layer " + std::to_string(k) + " has wrong width");
        }
    }
}

void check_d(const NetworkConfig& config, const std::vector<Vector>& d_prev) {
    if (d_prev.size() != config.layers.size()) throw Error(ErrorKind::shape, "d_prev has wrong layer count");
    for (std::size_t k = 0; k < d_prev.size(); ++k)
        if (d_prev[k].size() != config.layers[k].d_units)
            throw Error(ErrorKind::shape, "d_prev layer " + std::to_string(k) + " has wrong width");
}

GaussianParams head(const Matrix& mu_w, std::span<const double> mu_bias, const Matrix& sigma_w,
                    std::span<const double> sigma_bias, std::span<const double> d, std::size_t z) {
    GaussianParams g;
    g.mu.assign(mu_bias.begin(), mu_bias.end());
    g.log_sigma_raw.assign(sigma_bias.begin(), sigma_bias.end());
    if (g.mu.empty()) g.mu.assign(z, 0.0);
    if (g.log_sigma_raw.empty()) g.log_sigma_raw.assign(z, 0.0);
    if (!mu_w.empty()) gemv_add(mu_w, d, g.mu);
    if (!sigma_w.empty()) gemv_add(sigma_w, d, g.log_sigma_raw);
    for (double& v : g.mu) v = std::tanh(v);
    g.log_sigma.resize(z);
    for (std::size_t i = 0; i < z; ++i) g.log_sigma[i] = clamp_log_sigma(g.log_sigma_raw[i]);
    return g;
}

}  // namespace

double clamp_log_sigma(double raw) { return std::clamp(raw, kLogSigmaMin, kLogSigmaMax); }

NetworkState mtrnn_step(const Parameters& params, const NetworkConfig& config,
                        const NetworkState& prev, const std::vector<Vector>& z,
                        std::span<const double> input) {
    check_state(config, prev);
    const std::size_t n_layers = config.layers.size();
    if (z.size() != n_layers) throw Error(ErrorKind::shape, "mtrnn_step: z has wrong layer count");
    NetworkState next;
    next.h.resize(n_layers);
    next.d.resize(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
        const LayerParameters& l = params.layers[k];
        const double tau = config.layers[k].tau;
        Vector u(l.b.values().begin(), l.b.values().end());
        gemv_add(l.w_dd, prev.d[k], u);
        gemv_add(l.w_dz, z[k], u);
        if (k + 1 < n_layers) gemv_add(l.w_above, prev.d[k + 1], u);
        if (k > 0) gemv_add(l.w_below, prev.d[k - 1], u);
        if (k == 0 && config.mode == Mode::vrnn && !input.empty()) gemv_add(params.in_w_u, input, u);
        Vector& h = next.h[k];
        Vector& d = next.d[k];
        h.resize(u.size());
        d.resize(u.size());
        const double leak = 1.0 - 1.0 / tau;
        for (std::size_t i = 0; i < u.size(); ++i) {
            h[i] = leak * prev.h[k][i] + u[i] / tau;
            d[i] = std::tanh(h[i]);
        }
    }
    return next;
}

std::vector<GaussianParams> prior_params(const Parameters& params, const NetworkConfig& config,
                                         const std::vector<Vector>& d_prev) {
    check_d(config, d_prev);
    std::vector<GaussianParams> out;
    for (std::size_t k = 0; k < config.layers.size(); ++k) {
        const LayerParameters& l = params.layers[k];
        out.push_back(head(l.prior_mu_w, l.prior_mu_b.values(), l.prior_sigma_w,
                           l.prior_sigma_b.values(), d_prev[k], config.layers[k].z_units));
    }
    return out;
}

std::vector<GaussianParams> posterior_params(const Parameters& params,
                                             const NetworkConfig& config,
                                             const std::vector<Vector>& d_prev,
                                             const AdaptiveVectors& adaptive, std::size_t t) {
    check_d(config, d_prev);
    if (adaptive.layer_count() != config.layers.size() || t >= adaptive.length()) {
        throw Error(ErrorKind::shape, "posterior_params: no adaptive vector for step " +
                                          std::to_string(t + 1));
    }
    std::vector<GaussianParams> out;
    for (std::size_t k = 0; k < config.layers.size(); ++k) {
        const LayerParameters& l = params.layers[k];
        const Matrix none;
        const bool use_d = config.posterior_uses_d;
        out.push_back(head(use_d ? l.post_mu_w : none, adaptive.mu[k].row(t),
                           use_d ? l.post_sigma_w : none, adaptive.log_sigma[k].row(t), d_prev[k],
                           config.layers[k].z_units));
    }
    return out;
}

std::vector<GaussianParams> vrnn_posterior_params(const Parameters& params,
                                                  const NetworkConfig& config,
                                                  const std::vector<Vector>& d_prev,
                                                  std::span<const double> observation) {
    if (config.mode != Mode::vrnn) throw Error(ErrorKind::usage, "vrnn posterior requested in pvrnn mode");
    check_d(config, d_prev);
    if (observation.size() != config.output_dim) throw Error(ErrorKind::shape, "vrnn posterior: observation width mismatch");
    std::vector<GaussianParams> out;
    for (std::size_t k = 0; k < config.layers.size(); ++k) {
        const LayerParameters& l = params.layers[k];
        // The observation term acts as a per-step bias on top of the learned one.
        Vector mu_bias(l.post_mu_b.values().begin(), l.post_mu_b.values().end());
        Vector sigma_bias(l.post_sigma_b.values().begin(), l.post_sigma_b.values().end());
        gemv_add(l.post_mu_x, observation, mu_bias);
        gemv_add(l.post_sigma_x, observation, sigma_bias);
        out.push_back(head(l.post_mu_w, mu_bias, l.post_sigma_w, sigma_bias, d_prev[k],
                           config.layers[k].z_units));
    }
    return out;
}

Vector reparameterize(std::span<const double> mu, std::span<const double> log_sigma,
                      std::span<const double> eps) {
    if (mu.size() != log_sigma.size() || mu.size() != eps.size()) {
        throw Error(ErrorKind::shape, "reparameterize: size mismatch");
    }
    Vector z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double ls = clamp_log_sigma(log_sigma[i]);
        z[i] = mu[i] + std::exp(ls) * eps[i];
    }
    return z;
}

Vector output_map(const Parameters& params, const NetworkConfig& config,
                  std::span<const double> d1, std::span<const double> z1) {
    Vector o(params.out_b.values().begin(), params.out_b.values().end());
    gemv_add(params.out_w_d, d1, o);
    if (config.output_uses_z) gemv_add(params.out_w_z, z1, o);
    for (double& v : o) v = std::tanh(v);
    return o;
}

StepRecord forward_step(const Parameters& params, const NetworkConfig& config,
                        const NetworkState& prev, const StepDrive& drive,
                        const NoiseTable& noise, std::size_t noise_row) {
    const std::size_t n_layers = config.layers.size();
    StepRecord rec;
    rec.source = drive.source;
    rec.layers.resize(n_layers);

    std::vector<GaussianParams> prior = prior_params(params, config, prev.d);
    std::vector<GaussianParams> post;
    switch (drive.source) {
    case LatentSource::posterior:
        if (drive.adaptive == nullptr) throw Error(ErrorKind::usage, "posterior step without adaptive vectors");
        post = posterior_params(params, config, prev.d, *drive.adaptive, drive.adaptive_row);
        break;
    case LatentSource::observation_posterior:
        post = vrnn_posterior_params(params, config, prev.d, drive.observation);
        break;
    case LatentSource::fixed:
        if (drive.fixed_z == nullptr || drive.fixed_z->size() != n_layers) {
            throw Error(ErrorKind::shape, "fixed latent step needs one Z vector per layer");
        }
        break;
    case LatentSource::prior:
        break;
    }

    std::vector<Vector> z(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
        LayerStep& ls = rec.layers[k];
        const std::size_t zu = config.layers[k].z_units;
        if (drive.source == LatentSource::fixed) {
            if ((*drive.fixed_z)[k].size() != zu) throw Error(ErrorKind::shape, "fixed Z has wrong width");
            ls.eps.assign(zu, 0.0);
            z[k] = (*drive.fixed_z)[k];
        } else {
            if (k >= noise.size() || noise_row >= noise[k].rows() || noise[k].cols() != zu) {
                throw Error(ErrorKind::shape, "noise table does not cover step " + std::to_string(noise_row + 1));
            }
            auto eps = noise[k].row(noise_row);
            ls.eps.assign(eps.begin(), eps.end());
            const GaussianParams& g = drive.source == LatentSource::prior ? prior[k] : post[k];
            z[k] = reparameterize(g.mu, g.log_sigma, ls.eps);
        }
        ls.prior = std::move(prior[k]);
        if (!post.empty()) ls.posterior = std::move(post[k]);
    }

    NetworkState next = mtrnn_step(params, config, prev, z, drive.input);
    for (std::size_t k = 0; k < n_layers; ++k) {
        rec.layers[k].h = std::move(next.h[k]);
        rec.layers[k].d = std::move(next.d[k]);
        rec.layers[k].z = std::move(z[k]);
    }
    rec.input.assign(drive.input.begin(), drive.input.end());
    rec.x = output_map(params, config, rec.layers[0].d, rec.layers[0].z);
    return rec;
}

namespace {

NetworkState state_of(const StepRecord& rec) {
    NetworkState s;
    for (const LayerStep& l : rec.layers) {
        s.h.push_back(l.h);
        s.d.push_back(l.d);
    }
    return s;
}

}  // namespace

Rollout rollout_posterior(const Parameters& params, const NetworkConfig& config,
                          const AdaptiveVectors& adaptive, const NoiseTable& noise,
                          const NetworkState& initial) {
    if (config.mode != Mode::pvrnn) throw Error(ErrorKind::usage, "rollout_posterior requires pvrnn mode");
    check_state(config, initial);
    Rollout r;
    r.initial = initial;
    r.steps.reserve(adaptive.length());
    NetworkState state = initial;
    for (std::size_t t = 0; t < adaptive.length(); ++t) {
        StepDrive drive;
        drive.source = LatentSource::posterior;
        drive.adaptive = &adaptive;
        drive.adaptive_row = t;
        r.steps.push_back(forward_step(params, config, state, drive, noise, t));
        state = state_of(r.steps.back());
    }
    return r;
}

Rollout rollout_posterior(const Parameters& params, const NetworkConfig& config,
                          const AdaptiveVectors& adaptive, std::size_t length, RngStream& rng) {
    if (adaptive.length() != length) {
        throw Error(ErrorKind::shape, "rollout_posterior: adaptive vectors cover " +
                                          std::to_string(adaptive.length()) + " steps, need " +
                                          std::to_string(length));
    }
    const NoiseTable noise = sample_noise(config, length, rng);
    return rollout_posterior(params, config, adaptive, noise, NetworkState::zeros(config));
}

Rollout rollout_prior(const Parameters& params, const NetworkConfig& config, std::size_t length,
                      const NoiseTable& noise, const Bootstrap& bootstrap,
                      const NetworkState& initial, std::span<const double> first_input) {
    check_state(config, initial);
    const bool closed_loop = config.mode == Mode::vrnn;
    Rollout r;
    r.initial = initial;
    r.steps.reserve(length);
    NetworkState state = initial;
    Vector input;
    if (closed_loop) {
        input.assign(config.output_dim, 0.0);
        if (!first_input.empty()) {
            if (first_input.size() != config.output_dim) throw Error(ErrorKind::shape, "first_input width mismatch");
            input.assign(first_input.begin(), first_input.end());
        }
    }
    for (std::size_t t = 0; t < length; ++t) {
        StepDrive drive;
        drive.input = input;
        if (t == 0 && bootstrap.adaptive) {
            if (config.mode != Mode::pvrnn) throw Error(ErrorKind::usage, "adaptive bootstrap requires pvrnn mode");
            drive.source = LatentSource::posterior;
            drive.adaptive = &*bootstrap.adaptive;
            drive.adaptive_row = 0;
        } else if (t == 0 && bootstrap.latent) {
            drive.source = LatentSource::fixed;
            drive.fixed_z = &*bootstrap.latent;
        } else {
            drive.source = LatentSource::prior;
        }
        r.steps.push_back(forward_step(params, config, state, drive, noise, t));
        state = state_of(r.steps.back());
        if (closed_loop) input = r.steps.back().x;
    }
    return r;
}

Rollout rollout_prior(const Parameters& params, const NetworkConfig& config, std::size_t length,
                      RngStream& rng, const Bootstrap& bootstrap) {
    const NoiseTable noise = sample_noise(config, length, rng);
    return rollout_prior(params, config, length, noise, bootstrap, NetworkState::zeros(config));
}

Rollout vrnn_rollout(const Parameters& params, const NetworkConfig& config,
                     const Matrix& targets, VrnnMode mode, const NoiseTable& noise,
                     const NetworkState& initial, std::span<const double> first_input) {
    if (config.mode != Mode::vrnn) throw Error(ErrorKind::usage, "vrnn_rollout called on a pvrnn network");
    if (targets.cols() != config.output_dim) throw Error(ErrorKind::shape, "vrnn_rollout: target width mismatch");
    if (mode == VrnnMode::closed_loop) {
        return rollout_prior(params, config, targets.rows(), noise, {}, initial, first_input);
    }
    check_state(config, initial);
    Rollout r;
    r.initial = initial;
    r.steps.reserve(targets.rows());
    NetworkState state = initial;
    Vector input(config.output_dim, 0.0);
    if (!first_input.empty()) {
        if (first_input.size() != config.output_dim) throw Error(ErrorKind::shape, "first_input width mismatch");
        input.assign(first_input.begin(), first_input.end());
    }
    for (std::size_t t = 0; t < targets.rows(); ++t) {
        StepDrive drive;
        drive.source = LatentSource::observation_posterior;
        drive.observation = targets.row(t);
        drive.input = input;
        r.steps.push_back(forward_step(params, config, state, drive, noise, t));
        state = state_of(r.steps.back());
        auto row = targets.row(t);
        input.assign(row.begin(), row.end());
    }
    return r;
}

}  // namespace pvrnn
