#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "pvrnn/analysis.h"

namespace pvrnn {

enum class Experiment { exp1, exp2 };

const char* experiment_name(Experiment e);
Experiment parse_experiment(const std::string& name);

// Everything a run needs. Seeds for each stage derive from `seed`:
// datagen 3, training 2, regression 4, analysis 5 (see stage_seed).
struct RunConfig {
    std::uint64_t seed = 1;
    Experiment experiment = Experiment::exp1;
    NetworkConfig network;
    Exp1Corpus exp1;
    Exp2Corpus exp2;
    TrainConfig training;
    std::vector<double> sweep_w;
    RegressionConfig regression;
    AnalysisConfig analysis;
};

enum class Stage : std::uint64_t { training = 2, datagen = 3, regression = 4, analysis = 5 };

std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

RunConfig default_config(Experiment e);

// Overlays `j` on the defaults of the experiment it names (exp1 when absent).
// Unknown keys raise ErrorKind::config naming the full key path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json network_to_json(const NetworkConfig& n);
NetworkConfig network_from_json(const nlohmann::json& j, const std::string& where);

// "d:z:tau,d:z:tau,..." fast to slow.
std::vector<LayerSpec> parse_layers(const std::string& spec);

// Resolves per-stage seeds into the training/regression sections.
void apply_seed(RunConfig& c);

}  // namespace pvrnn
