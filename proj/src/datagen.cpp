#include "pvrnn/datagen.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pvrnn {

void PfsmSpec::validate() const {
    if (states.empty()) throw Error(ErrorKind::config, "pfsm: no states");
    if (std::find(states.begin(), states.end(), start) == states.end()) {
        throw Error(ErrorKind::config, "pfsm: start state " + std::to_string(start) + " unknown");
    }
    for (int s : states) {
        double mass = 0.0;
        bool any = false;
        for (const auto& tr : transitions) {
            if (tr.from != s) continue;
            if (tr.probability < 0.0) {
                throw Error(ErrorKind::config, "pfsm: negative probability out of state " +
                                                   std::to_string(s));
            }
            if (std::find(states.begin(), states.end(), tr.to) == states.end()) {
                throw Error(ErrorKind::config, "pfsm: transition to unknown state " +
                                                   std::to_string(tr.to));
            }
            mass += tr.probability;
            any = true;
        }
        if (!any || std::abs(mass - 1.0) > 1e-12) {
            throw Error(ErrorKind::config, "pfsm: outgoing probabilities of state " +
                                               std::to_string(s) + " sum to " +
                                               std::to_string(mass));
        }
    }
}

PfsmSpec discrete_machine() {
    PfsmSpec spec;
    spec.states = {1, 2, 3};
    spec.start = 1;
    spec.transitions = {{1, 2, 1, 1.0}, {2, 3, 0, 1.0}, {3, 1, 0, 0.3}, {3, 1, 1, 0.7}};
    return spec;
}

char primitive_letter(int id) { return static_cast<char>('A' + id); }

PfsmSpec primitive_machine() {
    PfsmSpec spec;
    spec.states = {1, 2, 3, 4};
    spec.start = 1;
    spec.transitions = {{1, 2, primitive_a, 1.0},
                        {2, 3, primitive_b, 1.0},
                        {3, 4, primitive_a, 1.0},
                        {4, 1, primitive_b, 0.275},
                        {4, 1, primitive_c, 0.725}};
    return spec;
}

PfsmWalk pfsm_walk(const PfsmSpec& spec, std::size_t steps, RngStream& rng) {
    spec.validate();
    PfsmWalk walk;
    walk.emissions.reserve(steps);
    walk.states.reserve(steps);
    int state = spec.start;
    std::vector<const PfsmTransition*> out;
    for (std::size_t i = 0; i < steps; ++i) {
        out.clear();
        for (const auto& tr : spec.transitions)
            if (tr.from == state) out.push_back(&tr);
        const PfsmTransition* chosen = out.front();
        if (out.size() > 1) {
            // One uniform per stochastic transition; deterministic ones draw nothing.
            const double u = rng.uniform();
            double acc = 0.0;
            chosen = out.back();
            for (const PfsmTransition* tr : out) {
                acc += tr->probability;
                if (u < acc) {
                    chosen = tr;
                    break;
                }
            }
        }
        walk.emissions.push_back(chosen->emission);
        state = chosen->to;
        walk.states.push_back(state);
    }
    return walk;
}

std::vector<int> pfsm_generate_discrete(const PfsmSpec& spec, std::size_t length,
                                        RngStream& rng) {
    return pfsm_walk(spec, length, rng).emissions;
}

std::pair<double, double> curve_point(CurveShape shape, double u) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    u -= std::floor(u);
    switch (shape) {
    case CurveShape::circle:
        return {std::sin(two_pi * u), std::cos(two_pi * u)};
    case CurveShape::figure_eight: {
        // (sin 2πs, sin 4πs) rotated by 90°, entered at s = 1/4 where it passes (0, 1).
        const double s = u + 0.25;
        return {-std::sin(2.0 * two_pi * s), std::sin(two_pi * s)};
    }
    case CurveShape::triangle: {
        static constexpr double vx[3] = {0.0, -0.8660254037844386, 0.8660254037844386};
        static constexpr double vy[3] = {1.0, -0.5, -0.5};
        const double pos = u * 3.0;
        const int edge = std::min(2, static_cast<int>(pos));
        const double f = pos - edge;
        const int next = (edge + 1) % 3;
        return {vx[edge] + f * (vx[next] - vx[edge]), vy[edge] + f * (vy[next] - vy[edge])};
    }
    }
    return {0.0, 0.0};
}

std::vector<PrimitiveTemplate> default_templates() {
    std::vector<PrimitiveTemplate> out(3);
    out[0].id = primitive_a;
    out[0].shape = CurveShape::circle;
    out[1].id = primitive_b;
    out[1].shape = CurveShape::figure_eight;
    out[2].id = primitive_c;
    out[2].shape = CurveShape::triangle;
    return out;
}

Matrix render_primitive(const PrimitiveTemplate& tmpl, RngStream& rng) {
    const double amplitude = 1.0 + tmpl.amplitude_jitter * rng.gaussian();
    const double speed = std::max(0.5, 1.0 + tmpl.speed_jitter * rng.gaussian());
    const double per_cycle = static_cast<double>(tmpl.samples_per_cycle) / speed;
    const auto n = static_cast<std::size_t>(
        std::max(2.0, std::round(per_cycle * static_cast<double>(tmpl.cycles))));
    const double cycles = static_cast<double>(tmpl.cycles);
    Matrix out(n, 2);
    for (std::size_t j = 0; j < n; ++j) {
        const double u = cycles * static_cast<double>(j) / static_cast<double>(n);
        auto [x, y] = curve_point(tmpl.shape, u);
        out(j, 0) = tmpl.scale * amplitude * x;
        out(j, 1) = tmpl.scale * amplitude * y;
    }
    for (std::size_t j = 1; j < n; ++j) {
        const double dx = out(j, 0) - out(j - 1, 0);
        const double dy = out(j, 1) - out(j - 1, 1);
        if (std::hypot(dx, dy) > tmpl.max_step) {
            throw Error(ErrorKind::config, std::string("primitive ") +
                                               primitive_letter(tmpl.id) +
                                               ": step exceeds continuity bound; raise "
                                               "samples_per_cycle");
        }
    }
    return out;
}

PrimitiveTrajectory pfsm_generate_primitives(const PfsmSpec& spec, std::size_t n_primitives,
                                             const std::vector<PrimitiveTemplate>& templates,
                                             RngStream& rng, double observation_noise) {
    const PfsmWalk walk = pfsm_walk(spec, n_primitives, rng);
    PrimitiveTrajectory out;
    out.primitive_sequence = walk.emissions;
    std::vector<double> xs, ys;
    for (int id : walk.emissions) {
        auto it = std::find_if(templates.begin(), templates.end(),
                               [id](const PrimitiveTemplate& t) { return t.id == id; });
        if (it == templates.end()) {
            throw Error(ErrorKind::config, std::string("no template for primitive ") +
                                               primitive_letter(id));
        }
        const Matrix inst = render_primitive(*it, rng);
        for (std::size_t j = 0; j < inst.rows(); ++j) {
            xs.push_back(inst(j, 0));
            ys.push_back(inst(j, 1));
            out.labels.push_back(id);
        }
    }
    out.points = Matrix(xs.size(), 2);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        double x = xs[j];
        double y = ys[j];
        if (observation_noise > 0.0) {
            x += observation_noise * rng.gaussian();
            y += observation_noise * rng.gaussian();
        }
        out.points(j, 0) = std::clamp(x, -1.0, 1.0);
        out.points(j, 1) = std::clamp(y, -1.0, 1.0);
    }
    return out;
}

void SequenceDataset::validate() const {
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (sequences[i].cols() != dim) {
            throw Error(ErrorKind::shape, "dataset: sequence " + std::to_string(i) + " has dim " +
                                              std::to_string(sequences[i].cols()) +
                                              ", expected " + std::to_string(dim));
        }
        if (!all_finite(sequences[i].values())) {
            throw Error(ErrorKind::numeric, "dataset: sequence " + std::to_string(i) +
                                                " contains non-finite values");
        }
    }
}

double symbol_to_model(int symbol) { return symbol != 0 ? kSymbolLevel : -kSymbolLevel; }

int model_to_symbol(double value) { return value >= 0.0 ? 1 : 0; }

Matrix symbols_to_sequence(const std::vector<int>& symbols) {
    Matrix out(symbols.size(), 1);
    for (std::size_t t = 0; t < symbols.size(); ++t) out(t, 0) = symbol_to_model(symbols[t]);
    return out;
}

SequenceDataset make_exp1_dataset(const Exp1Corpus& corpus, std::uint64_t seed) {
    SequenceDataset ds;
    ds.dim = 1;
    ds.provenance = "exp1-pfsm";
    ds.seed = seed;
    const PfsmSpec spec = discrete_machine();
    for (std::size_t i = 0; i < corpus.sequences; ++i) {
        RngStream rng = RngStream::derive(seed, {1, i});
        ds.sequences.push_back(symbols_to_sequence(pfsm_generate_discrete(spec, corpus.length, rng)));
    }
    return ds;
}

namespace {

void fill_primitive_sequences(const Exp2Corpus& corpus, std::uint64_t seed, std::uint64_t group,
                              std::size_t count, std::size_t length, SequenceDataset& ds,
                              std::vector<std::vector<int>>& labels) {
    const PfsmSpec spec = primitive_machine();
    auto templates = default_templates();
    for (auto& t : templates) {
        t.samples_per_cycle = corpus.samples_per_cycle;
        t.amplitude_jitter = corpus.amplitude_jitter;
        t.speed_jitter = corpus.speed_jitter;
    }
    // A primitive instance is at least roughly samples_per_cycle steps long.
    const std::size_t min_instance = std::max<std::size_t>(1, corpus.samples_per_cycle);
    const std::size_t n_primitives = length / min_instance + 4;
    for (std::size_t i = 0; i < count; ++i) {
        RngStream rng = RngStream::derive(seed, {2, group, i});
        PrimitiveTrajectory traj =
            pfsm_generate_primitives(spec, n_primitives, templates, rng, corpus.observation_noise);
        if (traj.points.rows() < length) {
            throw Error(ErrorKind::config, "exp2 corpus: generated trajectory too short");
        }
        Matrix seq(length, 2);
        for (std::size_t t = 0; t < length; ++t) {
            seq(t, 0) = traj.points(t, 0);
            seq(t, 1) = traj.points(t, 1);
        }
        ds.sequences.push_back(std::move(seq));
        labels.emplace_back(traj.labels.begin(), traj.labels.begin() + static_cast<long>(length));
    }
}

}  // namespace

Exp2Datasets make_exp2_datasets(const Exp2Corpus& corpus, std::uint64_t seed) {
    Exp2Datasets out;
    for (SequenceDataset* ds : {&out.train, &out.long_test, &out.test}) {
        ds->dim = 2;
        ds->seed = seed;
    }
    out.train.provenance = "exp2-primitives-train";
    out.long_test.provenance = "exp2-primitives-test-long";
    out.test.provenance = "exp2-primitives-test";
    fill_primitive_sequences(corpus, seed, 0, corpus.train_sequences, corpus.train_length,
                             out.train, out.train_labels);
    fill_primitive_sequences(corpus, seed, 1, 1, corpus.long_test_length, out.long_test,
                             out.long_test_labels);
    fill_primitive_sequences(corpus, seed, 2, corpus.test_sequences, corpus.test_length,
                             out.test, out.test_labels);
    return out;
}

void dataset_save(const SequenceDataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write dataset " + path.string());
    out << "# pvrnn-dataset v1\n";
    out << "# provenance=" << dataset.provenance << "\n";
    out << "# seed=" << dataset.seed << "\n";
    out << "# sequences=" << dataset.sequences.size() << "\n";
    out << "# dim=" << dataset.dim << "\n";
    char buf[64];
    for (const Matrix& seq : dataset.sequences) {
        out << seq.cols() << "," << seq.rows() << "\n";
        for (std::size_t t = 0; t < seq.rows(); ++t) {
            for (std::size_t j = 0; j < seq.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", seq(t, j));
                if (j) out << ',';
                out << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw Error(ErrorKind::io, "write failed for dataset " + path.string());
}

namespace {

[[noreturn]] void format_error(const std::filesystem::path& path, std::size_t line,
                               const std::string& what) {
    throw Error(ErrorKind::format,
                path.string() + ":" + std::to_string(line) + ": " + what);
}

std::uint64_t parse_uint(const std::string& s, const std::filesystem::path& path,
                         std::size_t line) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) format_error(path, line, "bad integer '" + s + "'");
    return v;
}

std::string header_value(const std::string& line, const std::string& key,
                         const std::filesystem::path& path, std::size_t lineno) {
    const std::string prefix = "# " + key + "=";
    if (line.rfind(prefix, 0) != 0) format_error(path, lineno, "expected '" + prefix + "'");
    return line.substr(prefix.size());
}

}  // namespace

SequenceDataset dataset_load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read dataset " + path.string());
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != "# pvrnn-dataset v1") format_error(path, 1, "missing dataset magic");
    SequenceDataset ds;
    if (!next()) format_error(path, lineno + 1, "truncated header");
    ds.provenance = header_value(line, "provenance", path, lineno);
    if (!next()) format_error(path, lineno + 1, "truncated header");
    ds.seed = parse_uint(header_value(line, "seed", path, lineno), path, lineno);
    if (!next()) format_error(path, lineno + 1, "truncated header");
    const std::size_t count = parse_uint(header_value(line, "sequences", path, lineno), path, lineno);
    if (!next()) format_error(path, lineno + 1, "truncated header");
    ds.dim = parse_uint(header_value(line, "dim", path, lineno), path, lineno);

    for (std::size_t i = 0; i < count; ++i) {
        if (!next()) format_error(path, lineno + 1, "missing header for sequence " + std::to_string(i));
        const auto comma = line.find(',');
        if (comma == std::string::npos) format_error(path, lineno, "bad sequence header");
        const std::size_t dim = parse_uint(line.substr(0, comma), path, lineno);
        const std::size_t length = parse_uint(line.substr(comma + 1), path, lineno);
        if (dim != ds.dim) format_error(path, lineno, "sequence dim differs from dataset dim");
        Matrix seq(length, dim);
        for (std::size_t t = 0; t < length; ++t) {
            if (!next()) format_error(path, lineno + 1, "truncated sequence " + std::to_string(i));
            std::size_t pos = 0;
            for (std::size_t j = 0; j < dim; ++j) {
                const std::size_t end = line.find(',', pos);
                const std::size_t stop = end == std::string::npos ? line.size() : end;
                if (pos > line.size() || (j + 1 < dim && end == std::string::npos)) {
                    format_error(path, lineno, "expected " + std::to_string(dim) + " values");
                }
                const std::string field = line.substr(pos, stop - pos);
                char* parsed_end = nullptr;
                const double v = std::strtod(field.c_str(), &parsed_end);
                if (field.empty() || parsed_end != field.c_str() + field.size()) {
                    format_error(path, lineno, "bad number '" + field + "'");
                }
                seq(t, j) = v;
                pos = stop + 1;
                if (j + 1 == dim && end != std::string::npos) {
                    format_error(path, lineno, "too many values");
                }
            }
        }
        ds.sequences.push_back(std::move(seq));
    }
    while (next()) {
        if (!line.empty()) format_error(path, lineno, "trailing data after last sequence");
    }
    ds.validate();
    return ds;
}

void labels_save(const std::vector<std::vector<int>>& labels, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write labels " + path.string());
    out << "sequence,t,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t t = 0; t < labels[i].size(); ++t)
            out << i << ',' << t + 1 << ',' << primitive_letter(labels[i][t]) << '\n';
}

}  // namespace pvrnn
