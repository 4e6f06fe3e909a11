#pragma once

#include <map>
#include <string>
#include <vector>

#include "pvrnn/model.h"

namespace pvrnn {

// Element-wise KL(q || p) between diagonal Gaussians given standard deviations.
// Throws ErrorKind::numeric on a non-positive sigma.
Vector kl_gaussians(std::span<const double> mu_q, std::span<const double> sigma_q,
                    std::span<const double> mu_p, std::span<const double> sigma_p);

// Same quantity from log standard deviations (the form stored on a tape).
double kl_gaussian_log(double mu_q, double log_sigma_q, double mu_p, double log_sigma_p);

struct LossBreakdown {
    double likelihood = 0.0;  // -(1/2D) sum_t ||X_t - target_t||^2
    double kl = 0.0;          // sum_t sum_k sum_j KL / total_z
    double w = 0.0;
    double total = 0.0;       // likelihood - w * kl
    Matrix kl_per_step;       // T x layers, raw per-layer sums before normalization

    double mse() const;  // mean squared error per element, recovered from likelihood
    std::size_t steps = 0;
    std::size_t dim = 0;
};

// Scores a tape against targets. Only steps whose latent source is a posterior
// contribute KL; prior-driven steps contribute the likelihood term alone.
LossBreakdown evaluate_loss(const NetworkConfig& config, const Rollout& tape,
                            const Matrix& targets, double w);

struct ElboResult {
    LossBreakdown loss;
    Rollout tape;
};

// Posterior-driven rollout (A for PV-RNN, observation posterior for VRNN)
// with the given noise, scored against the targets.
ElboResult elbo(const Parameters& params, const NetworkConfig& config,
                const AdaptiveVectors& adaptive, const Matrix& targets, double w,
                const NoiseTable& noise, const NetworkState& initial);
ElboResult elbo(const Parameters& params, const NetworkConfig& config,
                const AdaptiveVectors& adaptive, const Matrix& targets, double w, RngStream& rng);

struct GradientSet {
    Parameters params;
    AdaptiveVectors adaptive;
};

struct GradientOptions {
    bool parameters = true;  // false skips weight gradients (error regression)
    bool adaptive = true;
};

// Reverse-mode gradients of L_w along a tape produced by elbo() with the same
// inputs. The initial state of the tape is treated as a constant.
GradientSet bptt_gradients(const Parameters& params, const NetworkConfig& config,
                           const Rollout& tape, const Matrix& targets, double w,
                           const GradientOptions& options = {});

struct FdGroupReport {
    std::size_t checked = 0;
    double max_relative_error = 0.0;
    std::string worst_coordinate;
};

struct FdReport {
    std::map<std::string, FdGroupReport> groups;  // theta_d, theta_Z, theta_X, phi, A_mu, A_sigma
    double max_relative_error() const;
    std::size_t checked() const;
};

struct FdOptions {
    double step = 1e-5;
    std::size_t coordinates = 0;  // 0 checks every coordinate, else a random sample
    std::uint64_t seed = 0;       // coordinate sampling
    // Both gradients below this magnitude count as agreeing.
    double zero_threshold = 1e-9;
};

// Compares bptt_gradients against central differences of the loss with the
// noise table held fixed.
FdReport finite_diff_check(const Parameters& params, const NetworkConfig& config,
                           const AdaptiveVectors& adaptive, const Matrix& targets, double w,
                           const NoiseTable& noise, const FdOptions& options = {});

}  // namespace pvrnn
