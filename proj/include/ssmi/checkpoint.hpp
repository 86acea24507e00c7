#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "ssmi/config.hpp"
#include "ssmi/model.hpp"

namespace ssmi {

struct CheckpointMeta {
    std::string stage = "none";  // none | pretrain | finetune
    std::size_t step = 0;
    std::uint64_t seed = 0;
    std::string hash;          // config_hash of the model section
    nlohmann::json config;     // effective experiment config
    nlohmann::json overrides;  // CLI overrides applied when producing this file
};

struct LoadedCheckpoint {
    CheckpointMeta meta;
    ExperimentConfig config;
    std::unique_ptr<LvlmModel> model;
};

// Model weights in canonical order inside the named-tensor container.
void save_checkpoint(const LvlmModel& model, const CheckpointMeta& meta, const std::string& path);
// Rebuilds the model from the embedded config and stored tensors; restores
// the freeze mode implied by the stage.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ssmi
