#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pvrnn/config.h"

using namespace pvrnn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pvrnn_unit";
    fs::create_directories(dir);
    return dir / name;
}

Checkpoint sample_checkpoint() {
    NetworkConfig net;
    net.layers = {{5, 2, 2.0}, {3, 1, 4.0}};
    net.output_dim = 2;
    net.seed = 4;
    SequenceDataset d;
    d.dim = 2;
    d.sequences = {Matrix(7, 2, 0.1), Matrix(9, 2, -0.2)};
    TrainConfig t;
    t.epochs = 3;
    t.w = 0.25e-3;
    t.seed = 9;
    return train(net, d, t);
}

}  // namespace

TEST(Checkpoint, RoundTripExact) {
    const Checkpoint c = sample_checkpoint();
    const fs::path p = scratch("rt.ckpt");
    checkpoint_save(c, p);
    const Checkpoint back = checkpoint_load(p);
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.network, c.network);
    EXPECT_EQ(back.adam, c.adam);
    EXPECT_EQ(back.history, c.history);
    EXPECT_EQ(back.w, c.w);
}

TEST(Checkpoint, TruncationDetected) {
    const fs::path p = scratch("trunc.ckpt");
    checkpoint_save(sample_checkpoint(), p);
    fs::resize_file(p, fs::file_size(p) - 9);
    try {
        checkpoint_load(p);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::format);
    }
}

TEST(Checkpoint, BadMagicDetected) {
    const fs::path p = scratch("magic.ckpt");
    std::ofstream(p) << "NOTACKPTxxxxxxxxxxxxxxxx";
    EXPECT_THROW(checkpoint_load(p), Error);
    EXPECT_THROW(checkpoint_load(scratch("does_not_exist.ckpt")), Error);
}

TEST(Checkpoint, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, ExperimentDefaults) {
    const RunConfig e1 = default_config(Experiment::exp1);
    EXPECT_EQ(e1.network.layers, (std::vector<LayerSpec>{{10, 1, 2.0}}));
    EXPECT_EQ(e1.training.epochs, 50000u);
    EXPECT_EQ(e1.sweep_w, (std::vector<double>{0.1, 0.05, 0.025, 0.015, 0.01, 0.001, 0.0001}));
    EXPECT_EQ(e1.regression.window, 50u);
    EXPECT_EQ(e1.regression.iterations, 30u);
    EXPECT_EQ(e1.regression.stride, 1u);
    EXPECT_EQ(e1.regression.lookahead, 5u);
    const RunConfig e2 = default_config(Experiment::exp2);
    EXPECT_EQ(e2.network.layers, (std::vector<LayerSpec>{{80, 8, 2.0}, {40, 4, 4.0}, {20, 2, 8.0}}));
    EXPECT_EQ(e2.network.output_dim, 2u);
    EXPECT_EQ(e2.training.w, 0.25e-3);
    EXPECT_NO_THROW(e2.network.validate());
}

TEST(Config, UnknownKeyNamed) {
    json j = config_to_json(default_config(Experiment::exp1));
    j["training"]["learning_rate_typo"] = 1.0;
    try {
        config_from_json(j);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("training.learning_rate_typo"), std::string::npos);
    }
}

TEST(Config, WrongTypeNamed) {
    json j = {{"regression", {{"window", "fifty"}}}};
    try {
        config_from_json(j);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("regression.window"), std::string::npos);
    }
}

TEST(Config, LayerSpecParsing) {
    EXPECT_EQ(parse_layers("80:8:2,40:4:4,20:2:8"),
              (std::vector<LayerSpec>{{80, 8, 2.0}, {40, 4, 4.0}, {20, 2, 8.0}}));
    EXPECT_THROW(parse_layers("10:1"), Error);
    EXPECT_THROW(parse_layers("10:1:2:3"), Error);
}

TEST(Config, StageSeedsDistinct) {
    RunConfig c = default_config(Experiment::exp1);
    c.seed = 5;
    apply_seed(c);
    EXPECT_NE(c.training.seed, c.regression.seed);
    EXPECT_EQ(c.training.seed, stage_seed(5, Stage::training));
    EXPECT_NE(stage_seed(5, Stage::datagen), stage_seed(6, Stage::datagen));
}

TEST(CliInvariant, ConfigRoundTripIsIdentity) {
    for (Experiment e : {Experiment::exp1, Experiment::exp2}) {
        RunConfig c = default_config(e);
        c.seed = 31;
        c.regression.w = 0.5;
        c.network.posterior_uses_d = false;
        c.analysis.ngram_n = 6;
        apply_seed(c);
        const json j = config_to_json(c);
        const RunConfig back = config_from_json(j);
        EXPECT_EQ(config_to_json(back), j);
        EXPECT_EQ(config_from_json(json::parse(j.dump())).network, c.network);
    }
}

TEST(CheckpointInvariant, SaveIsByteStable) {
    const Checkpoint c = sample_checkpoint();
    checkpoint_save(c, scratch("s1.ckpt"));
    checkpoint_save(checkpoint_load(scratch("s1.ckpt")), scratch("s2.ckpt"));
    EXPECT_EQ(file_sha256(scratch("s1.ckpt")), file_sha256(scratch("s2.ckpt")));
}
