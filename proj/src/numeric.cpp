#include "pvrnn/numeric.h"

#include <algorithm>
#include <cmath>

namespace pvrnn {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::config: return "config";
    case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void gemv_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
    if (m.cols() != x.size() || m.rows() != y.size()) {
        throw Error(ErrorKind::shape, "gemv: matrix " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()) + " vs x[" +
                                          std::to_string(x.size()) + "], y[" +
                                          std::to_string(y.size()) + "]");
    }
    const std::size_t cols = m.cols();
    const double* a = m.values().data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double acc = 0.0;
        const double* row = a + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

void gemv_transposed_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
    if (m.rows() != x.size() || m.cols() != y.size()) {
        throw Error(ErrorKind::shape, "gemv_t: matrix " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()) + " vs x[" +
                                          std::to_string(x.size()) + "], y[" +
                                          std::to_string(y.size()) + "]");
    }
    const std::size_t cols = m.cols();
    const double* a = m.values().data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* row = a + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
    }
}

void outer_add(Matrix& m, std::span<const double> a, std::span<const double> b) {
    if (m.rows() != a.size() || m.cols() != b.size()) {
        throw Error(ErrorKind::shape, "outer: matrix " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()) + " vs a[" +
                                          std::to_string(a.size()) + "], b[" +
                                          std::to_string(b.size()) + "]");
    }
    const std::size_t cols = m.cols();
    double* out = m.values().data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double ar = a[r];
        if (ar == 0.0) continue;
        double* row = out + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += ar * b[c];
    }
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed);
    for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return RngStream(s);
}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
}

Vector gaussian_sample(RngStream& rng, std::size_t n) {
    Vector out(n);
    for (double& x : out) x = rng.gaussian();
    return out;
}

void AdamState::restore(std::uint64_t t, std::vector<Vector> m, std::vector<Vector> v) {
    if (m.size() != v.size()) throw Error(ErrorKind::shape, "adam restore: moment count mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].size() != v[i].size()) {
            throw Error(ErrorKind::shape, "adam restore: moment size mismatch in block " +
                                              std::to_string(i));
        }
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

bool AdamState::operator==(const AdamState& other) const {
    return config_.alpha == other.config_.alpha && config_.beta1 == other.config_.beta1 &&
           config_.beta2 == other.config_.beta2 && config_.eps == other.config_.eps &&
           t_ == other.t_ && m_ == other.m_ && v_ == other.v_;
}

void adam_step(std::span<const ParamBlock> params, std::span<const GradBlock> grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw Error(ErrorKind::shape, "adam: " + std::to_string(params.size()) +
                                          " parameter blocks but " +
                                          std::to_string(grads.size()) + " gradient blocks");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.size() != grads[i].values.size()) {
            throw Error(ErrorKind::shape, "adam: block '" + params[i].name + "' has " +
                                              std::to_string(params[i].values.size()) +
                                              " values but gradient has " +
                                              std::to_string(grads[i].values.size()));
        }
        if (!all_finite(grads[i].values)) {
            throw Error(ErrorKind::numeric, "adam: non-finite gradient in block '" +
                                                grads[i].name + "'");
        }
    }
    if (state.m_.empty() && state.t_ == 0) {
        state.m_.resize(params.size());
        state.v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m_[i].assign(params[i].values.size(), 0.0);
            state.v_[i].assign(params[i].values.size(), 0.0);
        }
    }
    if (state.m_.size() != params.size()) {
        throw Error(ErrorKind::shape, "adam: state holds " + std::to_string(state.m_.size()) +
                                          " blocks, step presented " +
                                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m_[i].size() != params[i].values.size()) {
            throw Error(ErrorKind::shape, "adam: state size mismatch for block '" +
                                              params[i].name + "'");
        }
    }

    const AdamConfig& c = state.config_;
    ++state.t_;
    const double t = static_cast<double>(state.t_);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::span<double> p = params[i].values;
        std::span<const double> g = grads[i].values;
        Vector& m = state.m_[i];
        Vector& v = state.v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] += c.alpha * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

}  // namespace pvrnn
