#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvrnn/numeric.h"

namespace pvrnn {

enum class Mode { pvrnn, vrnn };

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& name);

struct LayerSpec {
    std::size_t d_units = 10;
    std::size_t z_units = 1;
    double tau = 2.0;

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkConfig {
    std::vector<LayerSpec> layers;  // fast -> slow
    std::size_t output_dim = 1;
    Mode mode = Mode::pvrnn;
    bool posterior_uses_d = true;
    bool output_uses_z = true;  // false gives W_xz zero width (d-only output head)
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t total_z() const;
    std::size_t total_d() const;
    bool operator==(const NetworkConfig&) const = default;
};

// log sigma is clamped to this range before exponentiation.
constexpr double kLogSigmaMin = -10.0;
constexpr double kLogSigmaMax = 5.0;

struct LayerParameters {
    Matrix w_dd;           // d_k x d_k
    Matrix w_dz;           // d_k x z_k
    Matrix w_above;        // d_k x d_{k+1}; empty for the top layer
    Matrix w_below;        // d_k x d_{k-1}; empty for the bottom layer
    Matrix b;              // d_k x 1
    Matrix prior_mu_w;     // z_k x d_k
    Matrix prior_mu_b;     // z_k x 1
    Matrix prior_sigma_w;  // z_k x d_k
    Matrix prior_sigma_b;  // z_k x 1
    Matrix post_mu_w;      // z_k x d_k; empty when the posterior ignores d
    Matrix post_sigma_w;   // z_k x d_k; empty when the posterior ignores d
    Matrix post_mu_x;      // z_k x D; VRNN observation path
    Matrix post_sigma_x;   // z_k x D
    Matrix post_mu_b;      // z_k x 1; VRNN only (A plays this role in PV-RNN)
    Matrix post_sigma_b;   // z_k x 1
};

struct Parameters {
    std::vector<LayerParameters> layers;
    Matrix out_w_d;  // D x d_1
    Matrix out_w_z;  // D x z_1 (or D x 0)
    Matrix out_b;    // D x 1
    Matrix in_w_u;   // d_1 x D; VRNN input path

    static Parameters zeros(const NetworkConfig& config);
    // Glorot-uniform weights, zero biases.
    static Parameters initialize(const NetworkConfig& config, RngStream& rng);

    // Visits every non-empty block in a fixed order with a stable name.
    template <class F>
    void for_each_block(F&& f) {
        visit(*this, f);
    }
    template <class F>
    void for_each_block(F&& f) const {
        visit(*this, f);
    }

    std::vector<ParamBlock> blocks();
    std::vector<GradBlock> grad_blocks() const;
    std::size_t parameter_count() const;
    void set_zero();
    void add(const Parameters& other);
    bool all_finite() const;
    bool operator==(const Parameters& other) const;

private:
    template <class P, class F>
    static void visit(P& p, F& f);
};

// Coarse grouping of parameter blocks: generative dynamics (theta_d), prior
// head (theta_Z), output head (theta_X), posterior head (phi).
std::string parameter_group(const std::string& block_name);

// Per-sequence trainable posterior carriers A_mu / A_sigma, one row per timestep.
struct AdaptiveVectors {
    std::vector<Matrix> mu;         // per layer, T x z_k
    std::vector<Matrix> log_sigma;  // per layer, T x z_k

    static AdaptiveVectors zeros(const NetworkConfig& config, std::size_t length);

    std::size_t length() const;
    std::size_t layer_count() const { return mu.size(); }
    AdaptiveVectors slice(std::size_t begin, std::size_t count) const;
    void assign_rows(std::size_t begin, const AdaptiveVectors& rows);
    void set_zero();
    void add(const AdaptiveVectors& other);
    bool all_finite() const;

    std::vector<ParamBlock> blocks(const std::string& prefix);
    std::vector<GradBlock> grad_blocks(const std::string& prefix) const;
    // Blocks restricted to one timestep row, for per-row optimizers.
    std::vector<ParamBlock> row_blocks(std::size_t t);
    std::vector<GradBlock> row_grad_blocks(std::size_t t) const;

    bool operator==(const AdaptiveVectors&) const = default;
};

// Per-layer standard-normal draws, T x z_k each.
using NoiseTable = std::vector<Matrix>;

NoiseTable sample_noise(const NetworkConfig& config, std::size_t length, RngStream& rng);
NoiseTable zero_noise(const NetworkConfig& config, std::size_t length);

struct NetworkState {
    std::vector<Vector> h;
    std::vector<Vector> d;

    static NetworkState zeros(const NetworkConfig& config);
};

struct GaussianParams {
    Vector mu;
    Vector log_sigma;      // clamped
    Vector log_sigma_raw;  // pre-clamp, for the clamp's zero-gradient region

    Vector sigma() const;
};

enum class LatentSource : std::uint8_t {
    posterior,              // A-driven posterior head
    prior,                  // conditional prior
    observation_posterior,  // VRNN posterior fed the current observation
    fixed,                  // externally supplied Z
};

struct LayerStep {
    Vector h;
    Vector d;
    GaussianParams prior;
    GaussianParams posterior;  // empty unless the source is a posterior
    Vector eps;
    Vector z;
};

struct StepRecord {
    LatentSource source = LatentSource::prior;
    std::vector<LayerStep> layers;
    Vector input;  // VRNN u_t; empty otherwise
    Vector x;
};

// Tape of a rollout: initial state plus every step's intermediate values.
struct Rollout {
    NetworkState initial;
    std::vector<StepRecord> steps;

    std::size_t length() const { return steps.size(); }
    NetworkState state_at(std::size_t steps_done) const;  // 0 -> initial
    Matrix outputs() const;                                // T x D
};

NetworkState mtrnn_step(const Parameters& params, const NetworkConfig& config,
                        const NetworkState& prev, const std::vector<Vector>& z,
                        std::span<const double> input = {});

std::vector<GaussianParams> prior_params(const Parameters& params, const NetworkConfig& config,
                                         const std::vector<Vector>& d_prev);

// Posterior head for timestep row t of the adaptive vectors.
std::vector<GaussianParams> posterior_params(const Parameters& params,
                                             const NetworkConfig& config,
                                             const std::vector<Vector>& d_prev,
                                             const AdaptiveVectors& adaptive, std::size_t t);

std::vector<GaussianParams> vrnn_posterior_params(const Parameters& params,
                                                  const NetworkConfig& config,
                                                  const std::vector<Vector>& d_prev,
                                                  std::span<const double> observation);

double clamp_log_sigma(double raw);

Vector reparameterize(std::span<const double> mu, std::span<const double> log_sigma,
                      std::span<const double> eps);

Vector output_map(const Parameters& params, const NetworkConfig& config,
                  std::span<const double> d1, std::span<const double> z1);

// What drives Z at a single step.
struct StepDrive {
    LatentSource source = LatentSource::prior;
    const AdaptiveVectors* adaptive = nullptr;  // posterior
    std::size_t adaptive_row = 0;
    std::span<const double> observation;        // observation_posterior
    const std::vector<Vector>* fixed_z = nullptr;
    std::span<const double> input;              // VRNN u_t
};

StepRecord forward_step(const Parameters& params, const NetworkConfig& config,
                        const NetworkState& prev, const StepDrive& drive,
                        const NoiseTable& noise, std::size_t noise_row);

Rollout rollout_posterior(const Parameters& params, const NetworkConfig& config,
                          const AdaptiveVectors& adaptive, const NoiseTable& noise,
                          const NetworkState& initial);
Rollout rollout_posterior(const Parameters& params, const NetworkConfig& config,
                          const AdaptiveVectors& adaptive, std::size_t length, RngStream& rng);

// Only the first row of `adaptive` is used, or `latent` is taken as Z_1 verbatim.
struct Bootstrap {
    std::optional<AdaptiveVectors> adaptive;
    std::optional<std::vector<Vector>> latent;
};

// Prior-driven generation; t = 1 comes from the bootstrap when given. In VRNN
// mode the previous output is fed back as input (closed loop), starting from
// `first_input` (zeros when empty).
Rollout rollout_prior(const Parameters& params, const NetworkConfig& config, std::size_t length,
                      const NoiseTable& noise, const Bootstrap& bootstrap,
                      const NetworkState& initial, std::span<const double> first_input = {});
Rollout rollout_prior(const Parameters& params, const NetworkConfig& config, std::size_t length,
                      RngStream& rng, const Bootstrap& bootstrap = {});

enum class VrnnMode { posterior_driven, closed_loop };

// VRNN rollouts. posterior_driven: u_t = target_{t-1} (u_1 = first_input or 0)
// and the posterior sees target_t. closed_loop: Z from the prior, u_1 =
// first_input and u_{t+1} = X_t; `targets` only fixes the length.
Rollout vrnn_rollout(const Parameters& params, const NetworkConfig& config,
                     const Matrix& targets, VrnnMode mode, const NoiseTable& noise,
                     const NetworkState& initial, std::span<const double> first_input = {});

}  // namespace pvrnn

#include "pvrnn/model_inl.h"
