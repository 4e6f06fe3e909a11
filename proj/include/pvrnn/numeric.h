#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvrnn {

enum class ErrorKind { shape, numeric, io, format, config, usage };

const char* error_kind_name(ErrorKind kind);

// All library failures are reported through this type so the CLI can map
// them onto a one-line machine-parsable category.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

using Vector = std::vector<double>;

// Row-major dense matrix. Column vectors (biases) are stored as n x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void fill(double value);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// y += M x
void gemv_add(const Matrix& m, std::span<const double> x, std::span<double> y);
// y += M^T x
void gemv_transposed_add(const Matrix& m, std::span<const double> x, std::span<double> y);
// M += a b^T
void outer_add(Matrix& m, std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> values);

/// Seeded pseudo-random stream.
///
/// Generator identity (part of the reproducibility contract, version 1):
/// std::mt19937_64 seeded with splitmix64(seed); uniforms take the top 53 bits
/// of one draw; normals use the Marsaglia polar method with a cached spare.
/// Child streams are derived by folding a path of integers into the seed with
/// splitmix64, so the stream for e.g. (epoch, sequence) never depends on how
/// many draws other streams consumed.
class RngStream {
public:
    static constexpr int kVersion = 1;

    explicit RngStream(std::uint64_t seed);

    static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double gaussian();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

Vector gaussian_sample(RngStream& rng, std::size_t n);

struct AdamConfig {
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct ParamBlock {
    std::string name;
    std::span<double> values;
};

struct GradBlock {
    std::string name;
    std::span<const double> values;
};

// Moments are allocated on the first step from the block sizes; every later
// step must present the same block layout.
class AdamState {
public:
    explicit AdamState(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const noexcept { return config_; }
    void set_alpha(double alpha) noexcept { config_.alpha = alpha; }
    std::uint64_t step_count() const noexcept { return t_; }

    const std::vector<Vector>& first_moments() const noexcept { return m_; }
    const std::vector<Vector>& second_moments() const noexcept { return v_; }
    void restore(std::uint64_t t, std::vector<Vector> m, std::vector<Vector> v);

    bool operator==(const AdamState& other) const;

private:
    friend void adam_step(std::span<const ParamBlock>, std::span<const GradBlock>, AdamState&);

    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

// Bias-corrected ADAM ascent step: params += alpha * m_hat / (sqrt(v_hat) + eps).
void adam_step(std::span<const ParamBlock> params, std::span<const GradBlock> grads,
               AdamState& state);

}  // namespace pvrnn
