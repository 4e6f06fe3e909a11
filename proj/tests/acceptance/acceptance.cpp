// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pvrnn/analysis.h"
#include "pvrnn/config.h"

using namespace pvrnn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass = false;
    std::string summary;
};

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

std::string join(const std::vector<double>& v, int precision = 4) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], precision);
    return s;
}

bool majority(const std::vector<bool>& votes) {
    return 2 * static_cast<std::size_t>(std::count(votes.begin(), votes.end(), true)) > votes.size();
}

std::string tally(const std::vector<bool>& votes) {
    return std::to_string(std::count(votes.begin(), votes.end(), true)) + "/" + std::to_string(votes.size());
}

// Runs jobs on up to hardware_concurrency threads, results in submission order.
template <typename T>
std::vector<T> run_all(std::vector<std::function<T()>> jobs) {
    const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
    std::vector<T> out(jobs.size());
    for (std::size_t begin = 0; begin < jobs.size(); begin += width) {
        std::vector<std::future<T>> batch;
        for (std::size_t i = begin; i < std::min(jobs.size(), begin + width); ++i) {
            batch.push_back(std::async(std::launch::async, jobs[i]));
        }
        for (std::size_t i = 0; i < batch.size(); ++i) out[begin + i] = batch[i].get();
    }
    return out;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

// ---------------------------------------------------------------------------

Verdict gradient_exactness() {
    const auto start = Clock::now();
    NetworkConfig net;
    net.layers = {{4, 1, 2.0}};
    net.output_dim = 2;
    const std::size_t T = 5;
    RngStream rng(2024);
    Parameters params = Parameters::initialize(net, rng);
    for (ParamBlock& b : params.blocks())
        for (double& v : b.values) v = 0.5 * rng.gaussian();
    AdaptiveVectors a = AdaptiveVectors::zeros(net, T);
    for (ParamBlock& b : a.blocks(""))
        for (double& v : b.values) v = 0.5 * rng.gaussian();
    Matrix targets(T, net.output_dim);
    for (double& v : targets.values()) v = 1.8 * rng.uniform() - 0.9;
    const NoiseTable noise = sample_noise(net, T, rng);
    FdOptions opt;
    opt.step = 1e-5;
    const FdReport report = finite_diff_check(params, net, a, targets, 0.5, noise, opt);
    const double elapsed = seconds_since(start);

    Verdict v;
    v.pass = elapsed < 30.0;
    std::string groups;
    for (const char* g : {"theta_d", "theta_Z", "theta_X", "phi", "A_mu", "A_sigma"}) {
        const auto it = report.groups.find(g);
        if (it == report.groups.end() || it->second.checked == 0) {
            v.pass = false;
            groups += std::string(" ") + g + "=missing";
            continue;
        }
        if (!(it->second.max_relative_error < 1e-4)) v.pass = false;
        groups += std::string(" ") + g + "=" + fmt(it->second.max_relative_error, 2);
    }
    v.summary = "max rel err per group:" + groups + "; " + std::to_string(report.checked()) +
                " coordinates in " + fmt(elapsed, 3) + " s";
    return v;
}

// ---------------------------------------------------------------------------

double monte_carlo_kl(double mq, double sq, double mp, double sp, RngStream& rng, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = mq + sq * rng.gaussian();
        const double lq = -std::log(sq) - 0.5 * std::pow((x - mq) / sq, 2);
        const double lp = -std::log(sp) - 0.5 * std::pow((x - mp) / sp, 2);
        sum += lq - lp;
    }
    return sum / static_cast<double>(n);
}

Verdict kl_correctness() {
    RngStream rng(99);
    double worst = 0.0, worst_identical = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        const double mq = 2.0 * rng.uniform() - 1.0;
        const double mp = 2.0 * rng.uniform() - 1.0;
        const double sq = 0.5 + rng.uniform();
        const double sp = 0.5 + rng.uniform();
        const double closed = kl_gaussians(Vector{mq}, Vector{sq}, Vector{mp}, Vector{sp})[0];
        worst = std::max(worst, std::abs(closed - monte_carlo_kl(mq, sq, mp, sp, rng, 1000000)));
        const double same = kl_gaussians(Vector{mq}, Vector{sq}, Vector{mq}, Vector{sq})[0];
        worst_identical = std::max(worst_identical, std::abs(same));
    }
    Verdict v;
    v.pass = worst < 0.01 && worst_identical <= 1e-12;
    v.summary = "max |closed - MC| over 100 draws " + fmt(worst, 3) + " (< 0.01), identical max " +
                fmt(worst_identical, 3) + " (<= 1e-12)";
    return v;
}

// ---------------------------------------------------------------------------

struct Exp1Cell {
    double w = 0.0;
    Exp1Metrics metrics;
    double lyap_sampled = std::nan("");
    double lyap_zero = std::nan("");
};

// Seed -> cells in the sweep order (w decreasing).
std::map<std::uint64_t, std::vector<Exp1Cell>> exp1_sweep_cache;

const std::map<std::uint64_t, std::vector<Exp1Cell>>& exp1_sweep() {
    if (!exp1_sweep_cache.empty()) return exp1_sweep_cache;
    std::vector<std::function<Exp1Cell()>> jobs;
    std::vector<std::uint64_t> job_seed;
    for (std::uint64_t seed : kSeeds) {
        RunConfig c = default_config(Experiment::exp1);
        c.seed = seed;
        apply_seed(c);
        for (double w : c.sweep_w) {
            job_seed.push_back(seed);
            jobs.push_back([c, w, seed] {
                const auto start = Clock::now();
                const SequenceDataset data = make_exp1_dataset(c.exp1, stage_seed(seed, Stage::datagen));
                TrainConfig t = c.training;
                t.w = w;
                const Checkpoint ckpt = train(c.network, data, t);
                Exp1Cell cell;
                cell.w = w;
                const std::uint64_t analysis = stage_seed(seed, Stage::analysis);
                cell.metrics = exp1_metrics(ckpt, data, c.analysis, analysis);
                if (w == c.sweep_w.front()) {
                    LyapunovConfig l;
                    l.steps = c.analysis.lyapunov_steps;
                    l.transient = c.analysis.lyapunov_transient;
                    l.seed = RngStream::derive(analysis, {6}).seed();
                    l.sampled_noise = true;
                    cell.lyap_sampled = lyapunov_largest(ckpt, l);
                    l.sampled_noise = false;
                    cell.lyap_zero = lyapunov_largest(ckpt, l);
                }
                std::printf("  exp1 seed %llu w %-7s ADS %-6s VD %-9s KL %-7s (%.0f s)\n",
                            static_cast<unsigned long long>(seed), fmt(w).c_str(), fmt(cell.metrics.ads).c_str(),
                            fmt(cell.metrics.vd).c_str(), fmt(cell.metrics.ngram.value).c_str(), seconds_since(start));
                std::fflush(stdout);
                return cell;
            });
        }
    }
    const std::vector<Exp1Cell> cells = run_all(std::move(jobs));
    for (std::size_t i = 0; i < cells.size(); ++i) exp1_sweep_cache[job_seed[i]].push_back(cells[i]);
    return exp1_sweep_cache;
}

Verdict exp1_trends() {
    const auto start = Clock::now();
    const auto& sweep = exp1_sweep();
    std::vector<bool> ads_votes, vd_votes, kl_votes;
    for (const auto& [seed, cells] : sweep) {
        std::vector<double> ads, vd, kl;
        for (const Exp1Cell& c : cells) {
            ads.push_back(c.metrics.ads);
            vd.push_back(c.metrics.vd);
            kl.push_back(c.metrics.ngram.value);
        }
        bool ads_ok = ads.front() >= 20.0 && ads.back() <= 12.0;
        bool vd_ok = vd.front() < 0.005 && vd.back() > 0.05;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            ads_ok = ads_ok && ads[i] <= ads[i - 1];
            vd_ok = vd_ok && vd[i] >= vd[i - 1];
        }
        const std::size_t best = std::min_element(kl.begin(), kl.end()) - kl.begin();
        const bool kl_ok = best != 0 && best + 1 != kl.size();
        ads_votes.push_back(ads_ok);
        vd_votes.push_back(vd_ok);
        kl_votes.push_back(kl_ok);
        std::printf("  exp1 seed %llu ADS [%s] VD [%s] KL [%s]\n", static_cast<unsigned long long>(seed),
                    join(ads, 3).c_str(), join(vd, 3).c_str(), join(kl, 3).c_str());
    }
    Verdict v;
    v.pass = majority(ads_votes) && majority(vd_votes) && majority(kl_votes);
    v.summary = "(a) ADS trend " + tally(ads_votes) + " seeds, (b) VD trend " + tally(vd_votes) +
                " seeds, (c) interior KL minimum " + tally(kl_votes) + " seeds; sweep " +
                fmt(seconds_since(start), 4) + " s";
    return v;
}

Verdict deterministic_chaos() {
    const auto& sweep = exp1_sweep();
    std::vector<bool> lyap_votes, vd_votes;
    std::string lyap, ratio;
    for (const auto& [seed, cells] : sweep) {
        const Exp1Cell& high = cells.front();
        const Exp1Cell& low = cells.back();
        const auto in_band = [](double x) { return x >= 0.01 && x <= 0.3; };
        lyap_votes.push_back(in_band(high.lyap_sampled) && in_band(high.lyap_zero));
        vd_votes.push_back(low.metrics.vd >= 10.0 * high.metrics.vd);
        lyap += " " + fmt(high.lyap_sampled, 3) + "/" + fmt(high.lyap_zero, 3);
        ratio += " " + fmt(low.metrics.vd / high.metrics.vd, 3);
    }
    Verdict v;
    v.pass = majority(lyap_votes) && majority(vd_votes);
    v.summary = "lambda_max(w=0.1) sampled/zero:" + lyap + " in [0.01, 0.3] on " + tally(lyap_votes) +
                " seeds; VD(1e-4)/VD(0.1):" + ratio + " >= 10 on " + tally(vd_votes) + " seeds";
    return v;
}

// ---------------------------------------------------------------------------

// Desk-scale substitute for the full Experiment 2 setup.
RunConfig exp2_scaled(std::uint64_t seed) {
    RunConfig c = default_config(Experiment::exp2);
    c.seed = seed;
    c.network.layers = {{20, 2, 2.0}, {10, 1, 4.0}, {5, 1, 8.0}};
    c.exp2.train_sequences = 8;
    c.exp2.train_length = 200;
    c.exp2.test_sequences = 16;
    c.exp2.test_length = 200;
    c.training.epochs = 20000;
    apply_seed(c);
    return c;
}

constexpr double kExp2W[] = {1.0e-3, 0.25e-3, 0.1e-3};

struct Exp2Cell {
    std::uint64_t seed = 0;
    Mode mode = Mode::pvrnn;
    double w = 0.0;
    std::vector<double> mse;
};

std::vector<Exp2Cell> exp2_cache;

const std::vector<Exp2Cell>& exp2_sweep() {
    if (!exp2_cache.empty()) return exp2_cache;
    std::vector<std::function<Exp2Cell()>> jobs;
    for (std::uint64_t seed : kSeeds) {
        for (Mode mode : {Mode::pvrnn, Mode::vrnn}) {
            for (double w : kExp2W) {
                if (mode == Mode::vrnn && w != kExp2W[1]) continue;
                jobs.push_back([seed, mode, w] {
                    const auto start = Clock::now();
                    RunConfig c = exp2_scaled(seed);
                    c.network.mode = mode;
                    c.training.w = w;
                    const Exp2Datasets data = make_exp2_datasets(c.exp2, stage_seed(seed, Stage::datagen));
                    const Checkpoint ckpt = train(c.network, data.train, c.training);
                    Exp2Cell cell;
                    cell.seed = seed;
                    cell.mode = mode;
                    cell.w = w;
                    cell.mse = test_set_mse(ckpt, data.test.sequences, c.regression, c.regression.lookahead);
                    std::printf("  exp2 seed %llu %s w' %-7s k-MSE [%s] (%.0f s)\n",
                                static_cast<unsigned long long>(seed), mode == Mode::pvrnn ? "pvrnn" : "vrnn ",
                                fmt(w).c_str(), join(cell.mse).c_str(), seconds_since(start));
                    std::fflush(stdout);
                    return cell;
                });
            }
        }
    }
    exp2_cache = run_all(std::move(jobs));
    return exp2_cache;
}

const Exp2Cell& exp2_cell(std::uint64_t seed, Mode mode, double w) {
    for (const Exp2Cell& c : exp2_sweep()) {
        if (c.seed == seed && c.mode == mode && c.w == w) return c;
    }
    throw Error(ErrorKind::usage, "missing exp2 cell");
}

Verdict regression_ordering() {
    const auto start = Clock::now();
    std::size_t monotone = 0, models = 0;
    std::vector<bool> interior_votes;
    for (std::uint64_t seed : kSeeds) {
        std::vector<double> five;
        for (double w : kExp2W) {
            const Exp2Cell& c = exp2_cell(seed, Mode::pvrnn, w);
            ++models;
            if (std::is_sorted(c.mse.begin(), c.mse.end())) ++monotone;
            five.push_back(c.mse.back());
        }
        interior_votes.push_back(five[1] < five[0] && five[1] < five[2]);
    }
    Verdict v;
    v.pass = monotone == models && majority(interior_votes);
    v.summary = "k-MSE non-decreasing in " + std::to_string(monotone) + "/" + std::to_string(models) +
                " models, interior w' best 5-step MSE on " + tally(interior_votes) + " seeds; " +
                fmt(seconds_since(start), 4) + " s";
    return v;
}

Verdict pvrnn_vs_vrnn() {
    std::vector<bool> votes;
    for (std::uint64_t seed : kSeeds) {
        const Exp2Cell& pv = exp2_cell(seed, Mode::pvrnn, kExp2W[1]);
        const Exp2Cell& vr = exp2_cell(seed, Mode::vrnn, kExp2W[1]);
        bool ok = true;
        for (std::size_t k = 0; k < pv.mse.size(); ++k) ok = ok && pv.mse[k] < vr.mse[k];
        votes.push_back(ok);
        std::printf("  exp2 seed %llu pvrnn [%s] vrnn [%s]\n", static_cast<unsigned long long>(seed),
                    join(pv.mse).c_str(), join(vr.mse).c_str());
    }
    Verdict v;
    v.pass = majority(votes);
    v.summary = "PV-RNN below VRNN for every k on " + tally(votes) + " seeds";
    return v;
}

// ---------------------------------------------------------------------------

Verdict invariant_suites() {
    const auto start = Clock::now();
    const std::string cmd = std::string("\"") + PVRNN_UNIT_BINARY + "\" --gtest_filter='*Invariant*' --gtest_brief=1";
    const int rc = std::system(cmd.c_str());
    const double elapsed = seconds_since(start);
    Verdict v;
    v.pass = rc == 0 && elapsed < 300.0;
    v.summary = std::string("invariant suites ") + (rc == 0 ? "green" : "red") + " in " + fmt(elapsed, 3) + " s";
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Verdict (*)()>> criteria = {
        {"gradient exactness", gradient_exactness},
        {"KL correctness", kl_correctness},
        {"experiment-1 trends", exp1_trends},
        {"deterministic chaos", deterministic_chaos},
        {"error-regression ordering", regression_ordering},
        {"PV-RNN vs VRNN", pvrnn_vs_vrnn},
        {"invariant suites", invariant_suites},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    std::vector<std::string> lines;
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.summary = std::string("error: ") + e.what();
        }
        all = all && v.pass;
        lines.push_back("criterion " + std::to_string(id) + " " + (v.pass ? "PASS" : "FAIL") + " " +
                        criteria[i].first + ": " + v.summary);
        std::printf("%s\n", lines.back().c_str());
        std::fflush(stdout);
    }
    std::printf("\nsummary\n");
    for (const std::string& l : lines) std::printf("%s\n", l.c_str());
    return all ? 0 : 1;
}
