// pvrnn command-line front end.
//
// Precedence for every setting: built-in experiment defaults, then the
// --config file (a config JSON or a manifest.json written by a previous run),
// then command-line flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pvrnn/config.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pvrnn;

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::string data;
    std::string test;
    std::string checkpoint;
    std::vector<std::string> checkpoints;
    std::string experiment;
    std::uint64_t seed = 0;
    double w = 0.0;
    std::size_t epochs = 0;
    std::size_t window = 0;
    std::size_t iterations = 0;
    std::size_t lookahead = 0;
    std::size_t stride = 0;
    std::string mode;
    std::string layers;
    std::string resume;
    std::size_t sequence = 0;
    std::size_t repeats = 0;
    bool zero_noise = false;
    std::size_t jobs = 1;
    std::vector<std::string> metrics;
    bool lyapunov = false;
    std::size_t fixed_window = 0;
    std::size_t horizon = 0;

    // Every subcommand registers its own copy of the shared flags.
    std::multimap<std::string, CLI::Option*> given;
    bool has(const std::string& name) const {
        auto [lo, hi] = given.equal_range(name);
        for (auto it = lo; it != hi; ++it)
            if (it->second->count() > 0) return true;
        return false;
    }
    void track(const std::string& name, CLI::Option* o) { given.emplace(name, o); }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_w(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

class Manifest {
public:
    Manifest(std::string command, const RunConfig& config, const Options& opt)
        : command_(std::move(command)), config_(config), out_(opt.out), config_path_(opt.config) {}

    void add(const fs::path& file) {
        std::lock_guard<std::mutex> lock(mutex_);
        artifacts_.push_back(fs::relative(file, out_).generic_string());
    }

    void write() {
        std::sort(artifacts_.begin(), artifacts_.end());
        json files = json::array();
        for (const std::string& a : artifacts_) files.push_back({{"path", a}, {"sha256", file_sha256(out_ / a)}});
        json m = {{"command", command_},
                  {"config_path", config_path_},
                  {"config", config_to_json(config_)},
                  {"config_hash", sha256_hex(config_to_json(config_).dump())},
                  {"seed", config_.seed},
                  {"out", out_.generic_string()},
                  {"artifacts", files}};
        std::ofstream f(out_ / "manifest.json");
        if (!f) throw Error(ErrorKind::io, "cannot write " + (out_ / "manifest.json").string());
        f << m.dump(2) << "\n";
    }

private:
    std::string command_;
    RunConfig config_;
    fs::path out_;
    std::string config_path_;
    std::vector<std::string> artifacts_;
    std::mutex mutex_;
};

RunConfig resolve_config(const Options& opt) {
    RunConfig c;
    if (!opt.config.empty()) {
        std::ifstream f(opt.config);
        if (!f) throw Error(ErrorKind::io, "cannot open config " + opt.config);
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::config, opt.config + ": " + e.what());
        }
        // A manifest carries the resolved config of the run that wrote it.
        if (j.is_object() && j.contains("artifacts") && j.contains("config")) j = j["config"];
        c = config_from_json(j);
        if (opt.has("experiment") && parse_experiment(opt.experiment) != c.experiment) {
            throw Error(ErrorKind::config, "--experiment " + opt.experiment + " conflicts with the config file");
        }
    } else {
        c = default_config(opt.has("experiment") ? parse_experiment(opt.experiment) : Experiment::exp1);
    }
    if (opt.has("seed")) c.seed = opt.seed;
    if (opt.has("w")) c.training.w = opt.w;
    if (opt.has("epochs")) c.training.epochs = opt.epochs;
    if (opt.has("window")) c.regression.window = opt.window;
    if (opt.has("iterations")) c.regression.iterations = opt.iterations;
    if (opt.has("stride")) c.regression.stride = opt.stride;
    if (opt.has("lookahead")) {
        c.regression.lookahead = opt.lookahead;
        c.analysis.lookahead = opt.lookahead;
    }
    if (opt.has("mode")) c.network.mode = parse_mode(opt.mode);
    if (opt.has("layers")) c.network.layers = parse_layers(opt.layers);
    apply_seed(c);
    c.network.validate();
    c.training.validate();
    c.regression.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text, Manifest& manifest) {
    std::ofstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorKind::io, "write failed for " + path.string());
    manifest.add(path);
}

void save_dataset(const SequenceDataset& d, const fs::path& path, Manifest& manifest) {
    dataset_save(d, path);
    manifest.add(path);
}

std::string history_csv(const Checkpoint& c) {
    std::string s = "epoch,likelihood,kl,total\n";
    for (const HistoryRow& r : c.history) {
        s += std::to_string(r.epoch) + "," + fmt(r.likelihood) + "," + fmt(r.kl) + "," + fmt(r.total) + "\n";
    }
    return s;
}

std::size_t total_steps(const SequenceDataset& d) {
    std::size_t n = 0;
    for (const Matrix& s : d.sequences) n += s.rows();
    return n;
}

int cmd_datagen(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    fs::create_directories(opt.out);
    Manifest manifest("datagen", c, opt);
    const std::uint64_t seed = stage_seed(c.seed, Stage::datagen);
    if (c.experiment == Experiment::exp1) {
        const SequenceDataset d = make_exp1_dataset(c.exp1, seed);
        save_dataset(d, fs::path(opt.out) / "train.csv", manifest);
        std::cout << "exp1: " << d.size() << " sequences x " << c.exp1.length << " steps\n";
    } else {
        const Exp2Datasets d = make_exp2_datasets(c.exp2, seed);
        const fs::path out(opt.out);
        save_dataset(d.train, out / "train.csv", manifest);
        save_dataset(d.long_test, out / "test_long.csv", manifest);
        save_dataset(d.test, out / "test.csv", manifest);
        labels_save(d.train_labels, out / "train_labels.csv");
        labels_save(d.long_test_labels, out / "test_long_labels.csv");
        labels_save(d.test_labels, out / "test_labels.csv");
        for (const char* f : {"train_labels.csv", "test_long_labels.csv", "test_labels.csv"}) manifest.add(out / f);
        std::cout << "exp2: " << d.train.size() << " train, " << d.long_test.size() << " long test, "
                  << d.test.size() << " test sequences\n";
    }
    manifest.write();
    return 0;
}

SequenceDataset require_dataset(const std::string& path, const char* flag) {
    if (path.empty()) throw Error(ErrorKind::usage, std::string(flag) + " is required");
    return dataset_load(path);
}

void run_training(const RunConfig& c, const SequenceDataset& data, const TrainConfig& tc,
                  const fs::path& dir, const std::string& resume, Manifest& manifest) {
    fs::create_directories(dir);
    const fs::path ckpt_path = dir / "model.ckpt";
    Checkpoint ckpt = resume.empty() ? initialize_training(c.network, data, tc) : checkpoint_load(resume);
    TrainHooks hooks;
    hooks.on_checkpoint = [&ckpt_path](const Checkpoint& k) { checkpoint_save(k, ckpt_path); };
    train(ckpt, data, tc, hooks);
    checkpoint_save(ckpt, ckpt_path);
    manifest.add(ckpt_path);
    write_text(dir / "training_log.csv", history_csv(ckpt), manifest);
}

int cmd_train(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    const SequenceDataset data = require_dataset(opt.data, "--data");
    fs::create_directories(opt.out);
    Manifest manifest("train", c, opt);
    run_training(c, data, c.training, opt.out, opt.resume, manifest);
    manifest.write();
    const Checkpoint ckpt = checkpoint_load(fs::path(opt.out) / "model.ckpt");
    if (!ckpt.history.empty()) {
        const HistoryRow& last = ckpt.history.back();
        std::cout << "epoch " << last.epoch << " likelihood " << fmt(last.likelihood) << " kl " << fmt(last.kl)
                  << " total " << fmt(last.total) << "\n";
    }
    return 0;
}

int cmd_sweep(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    const SequenceDataset data = require_dataset(opt.data, "--data");
    if (c.sweep_w.empty()) throw Error(ErrorKind::config, "training.sweep_w is empty");
    fs::create_directories(opt.out);
    Manifest manifest("sweep", c, opt);

    const std::size_t cells = c.sweep_w.size();
    std::vector<std::exception_ptr> errors(cells);
    std::size_t next = 0;
    std::mutex m;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(m);
                if (next >= cells) return;
                i = next++;
            }
            try {
                TrainConfig tc = c.training;
                tc.w = c.sweep_w[i];
                run_training(c, data, tc, fs::path(opt.out) / ("w_" + short_w(tc.w)), "", manifest);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::max<std::size_t>(1, std::min(opt.jobs, cells)); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::string summary = "w,epochs,likelihood,kl,total,mse,checkpoint\n";
    const double steps = static_cast<double>(total_steps(data));
    for (double w : c.sweep_w) {
        const fs::path p = fs::path("w_" + short_w(w)) / "model.ckpt";
        const Checkpoint k = checkpoint_load(fs::path(opt.out) / p);
        const HistoryRow last = k.history.empty() ? HistoryRow{} : k.history.back();
        summary += fmt(w) + "," + std::to_string(k.epoch) + "," + fmt(last.likelihood) + "," + fmt(last.kl) + "," +
                   fmt(last.total) + "," + fmt(-2.0 * last.likelihood / steps) + "," + p.generic_string() + "\n";
    }
    write_text(fs::path(opt.out) / "sweep_summary.csv", summary, manifest);
    manifest.write();
    std::cout << summary;
    return 0;
}

int cmd_regenerate(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    if (opt.checkpoint.empty()) throw Error(ErrorKind::usage, "--checkpoint is required");
    const Checkpoint ckpt = checkpoint_load(opt.checkpoint);
    fs::create_directories(opt.out);
    Manifest manifest("regenerate", c, opt);
    const std::size_t repeats = opt.has("repeats") ? opt.repeats : c.analysis.regenerations;
    std::vector<std::size_t> which;
    if (opt.has("sequence")) {
        which.push_back(opt.sequence);
    } else {
        for (std::size_t i = 0; i < ckpt.adaptive.size(); ++i) which.push_back(i);
    }

    std::string csv = "sequence,repeat,t";
    for (std::size_t i = 0; i < ckpt.network.output_dim; ++i) csv += ",x" + std::to_string(i);
    for (std::size_t k = 0; k < ckpt.network.layers.size(); ++k) {
        for (std::size_t j = 0; j < ckpt.network.layers[k].z_units; ++j) {
            csv += ",mu_p" + std::to_string(k) + "_" + std::to_string(j);
            csv += ",sigma_p" + std::to_string(k) + "_" + std::to_string(j);
        }
    }
    csv += "\n";
    const std::uint64_t seed = stage_seed(c.seed, Stage::analysis);
    for (std::size_t s : which) {
        const std::vector<Rollout> runs = regenerate_rollouts(ckpt, s, repeats, seed, opt.zero_noise);
        for (std::size_t r = 0; r < runs.size(); ++r) {
            for (std::size_t t = 0; t < runs[r].length(); ++t) {
                const StepRecord& st = runs[r].steps[t];
                csv += std::to_string(s) + "," + std::to_string(r) + "," + std::to_string(t + 1);
                for (double x : st.x) csv += "," + fmt(x);
                for (const LayerStep& l : st.layers) {
                    for (std::size_t j = 0; j < l.prior.mu.size(); ++j) {
                        csv += "," + fmt(l.prior.mu[j]) + "," + fmt(std::exp(l.prior.log_sigma[j]));
                    }
                }
                csv += "\n";
            }
        }
    }
    write_text(fs::path(opt.out) / "regenerations.csv", csv, manifest);
    manifest.write();
    return 0;
}

std::string predictions_csv(const std::vector<PredictionRecord>& records, std::size_t dim) {
    std::string csv = "t,k";
    for (std::size_t i = 0; i < dim; ++i) csv += ",pred" + std::to_string(i);
    for (std::size_t i = 0; i < dim; ++i) csv += ",target" + std::to_string(i);
    csv += "\n";
    for (const PredictionRecord& r : records) {
        csv += std::to_string(r.t) + "," + std::to_string(r.k);
        for (double x : r.prediction) csv += "," + fmt(x);
        for (double x : r.target) csv += "," + fmt(x);
        csv += "\n";
    }
    return csv;
}

int cmd_regress(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    if (opt.checkpoint.empty()) throw Error(ErrorKind::usage, "--checkpoint is required");
    const Checkpoint ckpt = checkpoint_load(opt.checkpoint);
    const SequenceDataset test = require_dataset(opt.data, "--data");
    if (opt.sequence >= test.size()) {
        throw Error(ErrorKind::usage, "--sequence " + std::to_string(opt.sequence) + " out of range (dataset has " +
                                          std::to_string(test.size()) + ")");
    }
    const Matrix& seq = test.sequences[opt.sequence];
    fs::create_directories(opt.out);
    Manifest manifest("regress", c, opt);
    const fs::path out(opt.out);

    if (opt.fixed_window > 0) {
        const FixedWindowResult r =
            fixed_window_regression(ckpt, seq, opt.fixed_window, c.regression.iterations, opt.horizon, c.regression);
        std::string csv = "t,phase";
        for (std::size_t i = 0; i < seq.cols(); ++i) csv += ",x" + std::to_string(i);
        for (std::size_t i = 0; i < seq.cols(); ++i) csv += ",target" + std::to_string(i);
        csv += "\n";
        auto emit = [&](const Matrix& m, std::size_t offset, const char* phase) {
            for (std::size_t t = 0; t < m.rows(); ++t) {
                csv += std::to_string(offset + t + 1) + "," + phase;
                for (double x : m.row(t)) csv += "," + fmt(x);
                for (std::size_t i = 0; i < seq.cols(); ++i) {
                    csv += offset + t < seq.rows() ? "," + fmt(seq(offset + t, i)) : std::string(",");
                }
                csv += "\n";
            }
        };
        emit(r.fitted, 0, "fit");
        emit(r.continuation, opt.fixed_window, "continuation");
        write_text(out / "fixed_window.csv", csv, manifest);
        std::cout << "window mse " << fmt(r.window_mse) << "\n";
        manifest.write();
        return 0;
    }

    std::vector<PredictionRecord> records;
    if (ckpt.network.mode == Mode::vrnn) {
        records = vrnn_predict(ckpt, seq, c.regression.lookahead, c.regression.seed,
                               c.regression.sample_prediction_noise);
    } else {
        records = error_regression(ckpt, seq, c.regression).predictions;
    }
    const std::vector<double> mse = prediction_mse(records, seq, c.regression.lookahead);
    write_text(out / "predictions.csv", predictions_csv(records, seq.cols()), manifest);
    std::string summary = "k,mse\n";
    for (std::size_t k = 0; k < mse.size(); ++k) summary += std::to_string(k + 1) + "," + fmt(mse[k]) + "\n";
    write_text(out / "regression_summary.csv", summary, manifest);
    manifest.write();
    std::cout << summary;
    return 0;
}

std::string checkpoint_config_hash(const Checkpoint& k) {
    json j = {{"network", network_to_json(k.network)}, {"w", k.w}, {"seed", k.seed}, {"epoch", k.epoch}};
    return sha256_hex(j.dump()).substr(0, 16);
}

int cmd_analyze(const Options& opt) {
    const RunConfig c = resolve_config(opt);
    std::vector<std::string> paths = opt.checkpoints;
    if (!opt.checkpoint.empty()) paths.insert(paths.begin(), opt.checkpoint);
    if (paths.empty()) throw Error(ErrorKind::usage, "--checkpoints is required");
    const SequenceDataset train = require_dataset(opt.data, "--data");
    std::vector<Matrix> test;
    if (!opt.test.empty()) test = dataset_load(opt.test).sequences;

    std::vector<std::string> metrics = opt.metrics;
    const bool discrete = train.dim == 1;
    if (metrics.empty()) {
        if (discrete) {
            metrics = {"ads", "vd", "ngram_kl"};
        } else {
            metrics = {"ads_continuous", "mean_sigma_p"};
            for (std::size_t k = 1; k <= c.analysis.lookahead; ++k) metrics.push_back("mse_k" + std::to_string(k));
        }
        if (opt.lyapunov) metrics.insert(metrics.end(), {"lyapunov_sampled", "lyapunov_zero"});
    }
    for (const std::string& m : metrics) {
        const bool exp1_only = m == "ads" || m == "vd" || m == "ngram_kl";
        if (exp1_only && !discrete) throw Error(ErrorKind::usage, "metric " + m + " needs 1-D discrete data, dataset has dim " + std::to_string(train.dim));
        if (m.rfind("mse_k", 0) == 0 && test.empty()) throw Error(ErrorKind::usage, "metric " + m + " needs --test");
    }

    fs::create_directories(opt.out);
    Manifest manifest("analyze", c, opt);
    const std::uint64_t seed = stage_seed(c.seed, Stage::analysis);
    std::string csv = "metric,w,value,config_hash,checkpoint\n";
    for (const std::string& path : paths) {
        const Checkpoint k = checkpoint_load(path);
        std::map<std::string, double> values;
        auto want = [&](const std::string& m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };
        if (want("ads") || want("vd") || want("ngram_kl")) {
            const Exp1Metrics e = exp1_metrics(k, train, c.analysis, seed);
            values["ads"] = e.ads;
            values["vd"] = e.vd;
            values["ngram_kl"] = e.ngram.value;
        }
        bool need_exp2 = want("ads_continuous") || want("mean_sigma_p");
        for (const std::string& m : metrics) need_exp2 = need_exp2 || m.rfind("mse_k", 0) == 0;
        if (need_exp2) {
            const Exp2Metrics e = exp2_metrics(k, train, test, c.regression, c.analysis, seed);
            // Target regeneration needs trained A_1, which a VRNN does not have.
            if (k.network.mode == Mode::pvrnn) values["ads_continuous"] = e.ads;
            values["mean_sigma_p"] = e.mean_prior_sigma;
            for (std::size_t i = 0; i < e.mse.size(); ++i) values["mse_k" + std::to_string(i + 1)] = e.mse[i];
        }
        for (const char* m : {"lyapunov_sampled", "lyapunov_zero"}) {
            if (!want(m)) continue;
            LyapunovConfig lc;
            lc.steps = c.analysis.lyapunov_steps;
            lc.transient = c.analysis.lyapunov_transient;
            lc.sampled_noise = std::string(m) == "lyapunov_sampled";
            lc.seed = RngStream::derive(seed, {6}).seed();
            values[m] = lyapunov_largest(k, lc);
        }
        const std::string hash = checkpoint_config_hash(k);
        for (const std::string& m : metrics) {
            auto it = values.find(m);
            if (it == values.end() && m == "ads_continuous") continue;
            if (it == values.end()) throw Error(ErrorKind::usage, "unknown metric '" + m + "'");
            csv += m + "," + fmt(k.w) + "," + fmt(it->second) + "," + hash + "," + path + "\n";
        }
    }
    write_text(fs::path(opt.out) / "metrics.csv", csv, manifest);
    manifest.write();
    std::cout << csv;
    return 0;
}

int cmd_gradcheck(const Options& opt) {
    RunConfig c = resolve_config(opt);
    if (opt.config.empty() && !opt.has("layers")) {
        c.network.layers = {{4, 1, 2.0}};
        c.network.output_dim = 2;
    }
    const double w = opt.has("w") ? opt.w : 0.5;
    const std::size_t T = 5;
    RngStream rng = RngStream::derive(c.seed, {7});
    const Parameters params = Parameters::initialize(c.network, rng);
    AdaptiveVectors a = AdaptiveVectors::zeros(c.network, T);
    for (auto& m : a.mu)
        for (double& v : m.values()) v = 0.5 * rng.gaussian();
    for (auto& m : a.log_sigma)
        for (double& v : m.values()) v = 0.3 * rng.gaussian();
    Matrix targets(T, c.network.output_dim);
    for (double& v : targets.values()) v = 1.8 * rng.uniform() - 0.9;
    const NoiseTable noise = sample_noise(c.network, T, rng);
    const FdReport report = finite_diff_check(params, c.network, a, targets, w, noise);
    std::cout << "group,checked,max_relative_error,worst\n";
    for (const auto& [name, g] : report.groups) {
        std::cout << name << "," << g.checked << "," << fmt(g.max_relative_error) << "," << g.worst_coordinate << "\n";
    }
    if (report.max_relative_error() >= 1e-4) {
        throw Error(ErrorKind::numeric, "gradient check failed: max relative error " + fmt(report.max_relative_error()));
    }
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::format: return 5;
    case ErrorKind::shape: return 6;
    case ErrorKind::numeric: return 7;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PV-RNN training, error regression and analysis"};
    app.require_subcommand(1);
    Options opt;

    auto common = [&opt](CLI::App* s) {
        opt.track("config", s->add_option("--config", opt.config, "config JSON or manifest.json"));
        opt.track("seed", s->add_option("--seed", opt.seed, "top-level seed"));
        s->add_option("--out", opt.out, "output directory");
        opt.track("experiment", s->add_option("--experiment", opt.experiment, "exp1|exp2 defaults when no config"));
        opt.track("w", s->add_option("--w", opt.w, "meta-prior"));
        opt.track("epochs", s->add_option("--epochs", opt.epochs, "training epochs"));
        opt.track("window", s->add_option("--window", opt.window, "error-regression window"));
        opt.track("iterations", s->add_option("--iterations", opt.iterations, "optimization steps per window"));
        opt.track("stride", s->add_option("--stride", opt.stride, "window slide stride"));
        opt.track("lookahead", s->add_option("--lookahead", opt.lookahead, "prediction horizon k"));
        opt.track("mode", s->add_option("--mode", opt.mode, "pvrnn|vrnn"));
        opt.track("layers", s->add_option("--layers", opt.layers, "d:z:tau,... fast to slow"));
    };

    CLI::App* datagen = app.add_subcommand("datagen", "generate training and test corpora");
    common(datagen);

    CLI::App* train_cmd = app.add_subcommand("train", "train one model");
    common(train_cmd);
    train_cmd->add_option("--data", opt.data, "training dataset CSV");
    train_cmd->add_option("--resume", opt.resume, "continue from a checkpoint");

    CLI::App* sweep = app.add_subcommand("sweep", "train one model per w in training.sweep_w");
    common(sweep);
    sweep->add_option("--data", opt.data, "training dataset CSV");
    sweep->add_option("--jobs", opt.jobs, "parallel training cells");

    CLI::App* regen = app.add_subcommand("regenerate", "target regeneration from trained A_1");
    common(regen);
    regen->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
    opt.track("sequence", regen->add_option("--sequence", opt.sequence, "training sequence index (default all)"));
    opt.track("repeats", regen->add_option("--repeats", opt.repeats, "rollouts per sequence"));
    regen->add_flag("--zero-noise", opt.zero_noise, "force eps = 0");

    CLI::App* regress = app.add_subcommand("regress", "error regression (PV-RNN) or closed-loop prediction (VRNN)");
    common(regress);
    regress->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
    regress->add_option("--data", opt.data, "test dataset CSV");
    regress->add_option("--sequence", opt.sequence, "test sequence index");
    regress->add_option("--fixed-window", opt.fixed_window, "single window [1, N] instead of sliding");
    regress->add_option("--horizon", opt.horizon, "steps generated after the fixed window");

    CLI::App* analyze = app.add_subcommand("analyze", "metric report per checkpoint");
    common(analyze);
    analyze->add_option("--checkpoints", opt.checkpoints, "checkpoint files")->expected(1, -1);
    analyze->add_option("--checkpoint", opt.checkpoint, "single checkpoint file");
    analyze->add_option("--data", opt.data, "training dataset CSV");
    analyze->add_option("--test", opt.test, "test dataset CSV (k-step MSE)");
    analyze->add_option("--metrics", opt.metrics, "subset of metrics")->expected(1, -1);
    analyze->add_flag("--lyapunov", opt.lyapunov, "add largest Lyapunov exponents");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "compare BPTT gradients with finite differences");
    common(gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*datagen) return cmd_datagen(opt);
        if (*train_cmd) return cmd_train(opt);
        if (*sweep) return cmd_sweep(opt);
        if (*regen) return cmd_regenerate(opt);
        if (*regress) return cmd_regress(opt);
        if (*analyze) return cmd_analyze(opt);
        if (*gradcheck) return cmd_gradcheck(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return exit_code(ErrorKind::io);
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
