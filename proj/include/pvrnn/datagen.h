#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvrnn/numeric.h"

namespace pvrnn {

// Probabilistic finite state machine. Emissions are small integers: symbols
// 0/1 for the discrete machine, primitive ids for the continuous one.
struct PfsmTransition {
    int from = 0;
    int to = 0;
    int emission = 0;
    double probability = 1.0;
};

struct PfsmSpec {
    std::vector<int> states;
    std::vector<PfsmTransition> transitions;
    int start = 0;

    // Throws ErrorKind::config when any state's outgoing mass is not 1 +- 1e-12.
    void validate() const;
};

// s1 -1-> s2 -0-> s3, then s3 -> s1 emitting 0 (p=0.3) or 1 (p=0.7).
PfsmSpec discrete_machine();

enum Primitive : int { primitive_a = 0, primitive_b = 1, primitive_c = 2 };

char primitive_letter(int id);

// s1 -A-> s2 -B-> s3 -A-> s4, then s4 -> s1 emitting B (p=0.275) or C (p=0.725).
PfsmSpec primitive_machine();

struct PfsmWalk {
    std::vector<int> emissions;
    std::vector<int> states;  // state entered after each emission
};

PfsmWalk pfsm_walk(const PfsmSpec& spec, std::size_t steps, RngStream& rng);

std::vector<int> pfsm_generate_discrete(const PfsmSpec& spec, std::size_t length, RngStream& rng);

enum class CurveShape { circle, figure_eight, triangle };

struct PrimitiveTemplate {
    int id = 0;
    CurveShape shape = CurveShape::circle;
    int cycles = 2;
    std::size_t samples_per_cycle = 14;
    double scale = 0.8;
    double amplitude_jitter = 0.05;  // std of the multiplicative amplitude factor
    double speed_jitter = 0.05;      // std of the multiplicative speed factor
    double max_step = 1.0;           // continuity bound between consecutive samples
};

// Unit-amplitude point on the closed curve at phase u (one cycle per unit of u).
// All three curves pass through (0, 1) at u = 0 so instances chain continuously.
std::pair<double, double> curve_point(CurveShape shape, double u);

std::vector<PrimitiveTemplate> default_templates();

struct PrimitiveTrajectory {
    Matrix points;           // T x 2
    std::vector<int> labels; // primitive id per sample
    std::vector<int> primitive_sequence;
};

// Renders one primitive instance (two cycles) with per-instance amplitude and
// speed jitter; no additive noise.
Matrix render_primitive(const PrimitiveTemplate& tmpl, RngStream& rng);

PrimitiveTrajectory pfsm_generate_primitives(const PfsmSpec& spec, std::size_t n_primitives,
                                             const std::vector<PrimitiveTemplate>& templates,
                                             RngStream& rng, double observation_noise = 0.05);

struct SequenceDataset {
    std::vector<Matrix> sequences;  // each T_i x dim
    std::size_t dim = 0;
    std::string provenance;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return sequences.size(); }
    void validate() const;
    bool operator==(const SequenceDataset&) const = default;
};

// Discrete symbols 0/1 live in model space as -0.9/+0.9; 0 is the decision midpoint.
constexpr double kSymbolLevel = 0.9;
double symbol_to_model(int symbol);
int model_to_symbol(double value);

Matrix symbols_to_sequence(const std::vector<int>& symbols);

struct Exp1Corpus {
    std::size_t sequences = 10;
    std::size_t length = 24;
};

struct Exp2Corpus {
    std::size_t train_sequences = 16;
    std::size_t train_length = 400;
    std::size_t long_test_length = 6400;
    std::size_t test_sequences = 32;
    std::size_t test_length = 400;
    double observation_noise = 0.05;
    std::size_t samples_per_cycle = 14;
    double amplitude_jitter = 0.05;
    double speed_jitter = 0.05;
};

SequenceDataset make_exp1_dataset(const Exp1Corpus& corpus, std::uint64_t seed);

struct Exp2Datasets {
    SequenceDataset train;
    SequenceDataset long_test;
    SequenceDataset test;
    std::vector<std::vector<int>> train_labels;
    std::vector<std::vector<int>> long_test_labels;
    std::vector<std::vector<int>> test_labels;
};

Exp2Datasets make_exp2_datasets(const Exp2Corpus& corpus, std::uint64_t seed);

/// CSV layout:
///   # pvrnn-dataset v1
///   # provenance=<tag>
///   # seed=<n>
///   # sequences=<N>
///   # dim=<D>
/// then per sequence a header line "<dim>,<length>" followed by <length> rows
/// of <dim> comma-separated values printed with 17 significant digits.
void dataset_save(const SequenceDataset& dataset, const std::filesystem::path& path);
SequenceDataset dataset_load(const std::filesystem::path& path);

void labels_save(const std::vector<std::vector<int>>& labels, const std::filesystem::path& path);

}  // namespace pvrnn
