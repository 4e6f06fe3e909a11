#include "pvrnn/config.h"

#include <fstream>
#include <set>
#include <sstream>

namespace pvrnn {

using nlohmann::json;

const char* experiment_name(Experiment e) { return e == Experiment::exp2 ? "exp2" : "exp1"; }

Experiment parse_experiment(const std::string& name) {
    if (name == "exp1") return Experiment::exp1;
    if (name == "exp2") return Experiment::exp2;
    throw Error(ErrorKind::config, "unknown experiment '" + name + "' (expected exp1|exp2)");
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
    return RngStream::derive(seed, {static_cast<std::uint64_t>(stage)}).seed();
}

RunConfig default_config(Experiment e) {
    RunConfig c;
    c.experiment = e;
    if (e == Experiment::exp1) {
        c.network.layers = {{10, 1, 2.0}};
        c.network.output_dim = 1;
        c.training.epochs = 50000;
        c.training.w = 0.1;
        c.sweep_w = {0.1, 0.05, 0.025, 0.015, 0.01, 0.001, 0.0001};
    } else {
        c.network.layers = {{80, 8, 2.0}, {40, 4, 4.0}, {20, 2, 8.0}};
        c.network.output_dim = 2;
        c.training.epochs = 25000;
        c.training.w = 0.25e-3;
        c.sweep_w = {1.0e-3, 0.5e-3, 0.25e-3, 0.15e-3, 0.1e-3, 0.01e-3};
    }
    apply_seed(c);
    return c;
}

void apply_seed(RunConfig& c) {
    c.training.seed = stage_seed(c.seed, Stage::training);
    c.regression.seed = stage_seed(c.seed, Stage::regression);
    c.network.seed = c.training.seed;
}

namespace {

// Reads a section strictly: every key must be consumed by a handler.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw Error(ErrorKind::config, where_ + ": expected an object");
    }
    ~Section() = default;

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorKind::config, path(key) + ": wrong type");
        }
    }
    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw Error(ErrorKind::config, "unknown config key '" + path(it.key()) + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

json network_to_json(const NetworkConfig& n) {
    json layers = json::array();
    for (const LayerSpec& l : n.layers) layers.push_back({{"d_units", l.d_units}, {"z_units", l.z_units}, {"tau", l.tau}});
    return {{"layers", layers},
            {"output_dim", n.output_dim},
            {"mode", mode_name(n.mode)},
            {"posterior_uses_d", n.posterior_uses_d},
            {"output_uses_z", n.output_uses_z},
            {"seed", n.seed}};
}

namespace {

void read_network(const json& j, const std::string& where, NetworkConfig& n) {
    Section s(j, where);
    if (const json* layers = s.child("layers")) {
        if (!layers->is_array()) throw Error(ErrorKind::config, s.path("layers") + ": expected an array");
        n.layers.clear();
        for (std::size_t i = 0; i < layers->size(); ++i) {
            LayerSpec l;
            Section ls((*layers)[i], s.path("layers[" + std::to_string(i) + "]"));
            ls.read("d_units", l.d_units);
            ls.read("z_units", l.z_units);
            ls.read("tau", l.tau);
            ls.finish();
            n.layers.push_back(l);
        }
    }
    s.read("output_dim", n.output_dim);
    std::string mode = mode_name(n.mode);
    s.read("mode", mode);
    n.mode = parse_mode(mode);
    s.read("posterior_uses_d", n.posterior_uses_d);
    s.read("output_uses_z", n.output_uses_z);
    s.read("seed", n.seed);
    s.finish();
}

}  // namespace

NetworkConfig network_from_json(const json& j, const std::string& where) {
    NetworkConfig n;
    read_network(j, where, n);
    n.validate();
    return n;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["experiment"] = experiment_name(c.experiment);
    json net = network_to_json(c.network);
    net.erase("seed");
    j["network"] = net;
    j["training"] = {{"epochs", c.training.epochs},
                     {"w", c.training.w},
                     {"sweep_w", c.sweep_w},
                     {"alpha", c.training.adam.alpha},
                     {"beta1", c.training.adam.beta1},
                     {"beta2", c.training.adam.beta2},
                     {"eps", c.training.adam.eps},
                     {"checkpoint_every", c.training.checkpoint_every},
                     {"history_every", c.training.history_every},
                     {"threads", c.training.threads}};
    j["regression"] = {{"window", c.regression.window},
                       {"iterations", c.regression.iterations},
                       {"stride", c.regression.stride},
                       {"lookahead", c.regression.lookahead},
                       {"learning_rate", c.regression.learning_rate},
                       {"sample_prediction_noise", c.regression.sample_prediction_noise}};
    if (c.regression.w) j["regression"]["w"] = *c.regression.w;
    j["datagen"] = {{"exp1", {{"sequences", c.exp1.sequences}, {"length", c.exp1.length}}},
                    {"exp2",
                     {{"train_sequences", c.exp2.train_sequences},
                      {"train_length", c.exp2.train_length},
                      {"long_test_length", c.exp2.long_test_length},
                      {"test_sequences", c.exp2.test_sequences},
                      {"test_length", c.exp2.test_length},
                      {"observation_noise", c.exp2.observation_noise},
                      {"samples_per_cycle", c.exp2.samples_per_cycle},
                      {"amplitude_jitter", c.exp2.amplitude_jitter},
                      {"speed_jitter", c.exp2.speed_jitter}}}};
    j["analysis"] = {{"regenerations", c.analysis.regenerations},
                     {"vd_runs", c.analysis.vd_runs},
                     {"ngram_n", c.analysis.ngram_n},
                     {"free_steps", c.analysis.free_steps},
                     {"lyapunov_steps", c.analysis.lyapunov_steps},
                     {"lyapunov_transient", c.analysis.lyapunov_transient},
                     {"mse_threshold", c.analysis.mse_threshold},
                     {"lookahead", c.analysis.lookahead},
                     {"test_sequences", c.analysis.test_sequences}};
    return j;
}

RunConfig config_from_json(const json& j) {
    Section top(j, "");
    std::string exp = "exp1";
    top.read("experiment", exp);
    RunConfig c = default_config(parse_experiment(exp));
    top.read("seed", c.seed);

    if (const json* n = top.child("network")) read_network(*n, "network", c.network);
    if (const json* t = top.child("training")) {
        Section s(*t, "training");
        s.read("epochs", c.training.epochs);
        s.read("w", c.training.w);
        s.read("sweep_w", c.sweep_w);
        s.read("alpha", c.training.adam.alpha);
        s.read("beta1", c.training.adam.beta1);
        s.read("beta2", c.training.adam.beta2);
        s.read("eps", c.training.adam.eps);
        s.read("checkpoint_every", c.training.checkpoint_every);
        s.read("history_every", c.training.history_every);
        s.read("threads", c.training.threads);
        s.finish();
    }
    if (const json* r = top.child("regression")) {
        Section s(*r, "regression");
        s.read("window", c.regression.window);
        s.read("iterations", c.regression.iterations);
        s.read("stride", c.regression.stride);
        s.read("lookahead", c.regression.lookahead);
        s.read("learning_rate", c.regression.learning_rate);
        s.read("sample_prediction_noise", c.regression.sample_prediction_noise);
        if (const json* w = s.child("w"); w && !w->is_null()) {
            if (!w->is_number()) throw Error(ErrorKind::config, "regression.w: wrong type");
            c.regression.w = w->get<double>();
        }
        s.finish();
    }
    if (const json* d = top.child("datagen")) {
        Section s(*d, "datagen");
        if (const json* e1 = s.child("exp1")) {
            Section e(*e1, "datagen.exp1");
            e.read("sequences", c.exp1.sequences);
            e.read("length", c.exp1.length);
            e.finish();
        }
        if (const json* e2 = s.child("exp2")) {
            Section e(*e2, "datagen.exp2");
            e.read("train_sequences", c.exp2.train_sequences);
            e.read("train_length", c.exp2.train_length);
            e.read("long_test_length", c.exp2.long_test_length);
            e.read("test_sequences", c.exp2.test_sequences);
            e.read("test_length", c.exp2.test_length);
            e.read("observation_noise", c.exp2.observation_noise);
            e.read("samples_per_cycle", c.exp2.samples_per_cycle);
            e.read("amplitude_jitter", c.exp2.amplitude_jitter);
            e.read("speed_jitter", c.exp2.speed_jitter);
            e.finish();
        }
        s.finish();
    }
    if (const json* a = top.child("analysis")) {
        Section s(*a, "analysis");
        s.read("regenerations", c.analysis.regenerations);
        s.read("vd_runs", c.analysis.vd_runs);
        s.read("ngram_n", c.analysis.ngram_n);
        s.read("free_steps", c.analysis.free_steps);
        s.read("lyapunov_steps", c.analysis.lyapunov_steps);
        s.read("lyapunov_transient", c.analysis.lyapunov_transient);
        s.read("mse_threshold", c.analysis.mse_threshold);
        s.read("lookahead", c.analysis.lookahead);
        s.read("test_sequences", c.analysis.test_sequences);
        s.finish();
    }
    top.finish();
    apply_seed(c);
    c.network.validate();
    c.training.validate();
    c.regression.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::vector<LayerSpec> parse_layers(const std::string& spec) {
    std::vector<LayerSpec> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        LayerSpec l;
        char c1 = 0, c2 = 0;
        std::istringstream is(item);
        if (!(is >> l.d_units >> c1 >> l.z_units >> c2 >> l.tau) || c1 != ':' || c2 != ':' || !is.eof()) {
            throw Error(ErrorKind::config, "layers: cannot parse '" + item + "' (expected d:z:tau)");
        }
        out.push_back(l);
    }
    if (out.empty()) throw Error(ErrorKind::config, "layers: empty specification");
    return out;
}

}  // namespace pvrnn
