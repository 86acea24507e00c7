#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssmi/data.hpp"
#include "ssmi/model.hpp"
#include "ssmi/training.hpp"

namespace ssmi {

// Full-mode warmup that prepares the frozen backbone before the state space
// modules are re-initialized and trained. steps = 0 keeps the backbone at its
// random init.
struct BackboneConfig {
    std::size_t steps = 300;
    double lr = 1e-3;
    std::size_t batch_size = 8;
};

struct EvalConfig {
    std::vector<double> sigmas{0.0, 0.5, 2.0, 10.0};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct PathsConfig {
    std::string checkpoint = "checkpoint.ssmi";
    std::string report = "report.txt";
    std::string log = "train.log";
};

struct ExperimentConfig {
    LvlmConfig model;
    BackboneConfig backbone;
    TrainConfig train;
    // Stage-scoped overrides; 0 means "use train.steps / train.lr".
    std::size_t pretrain_steps = 0;
    std::size_t finetune_steps = 0;
    double pretrain_lr = 0.0;
    double finetune_lr = 0.0;
    DatasetSpec data;
    EvalConfig eval;
    PathsConfig paths;

    void validate() const;
    TrainConfig stage_config(Stage stage) const;
};

// Strict JSON parsing: unknown keys and missing required fields
// (train.seed, train.steps, data.seed) raise ParseError naming the field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

nlohmann::json model_config_to_json(const LvlmConfig& cfg);
LvlmConfig model_config_from_json(const nlohmann::json& j);

// FNV-1a 64 over the canonical model-config JSON; identifies checkpoint
// compatibility.
std::string config_hash(const LvlmConfig& cfg);
// Human-readable list of differing model-config fields ("d_model: 64 vs 32").
std::vector<std::string> config_diff(const LvlmConfig& a, const LvlmConfig& b);

}  // namespace ssmi
