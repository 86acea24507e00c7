#pragma once

#include <memory>

#include "ssmi/config.hpp"

namespace ssmi {

// Seeded model init, optional full-mode warmup on the train split (the
// stand-in for a pretrained backbone), then freeze everything and give the
// state space modules a fresh stable init.
std::unique_ptr<LvlmModel> build_frozen_backbone(const ExperimentConfig& cfg, const Dataset& data,
                                                 std::uint64_t seed);

struct PipelineResult {
    std::unique_ptr<LvlmModel> model;
    TrainLog stage1_log;
    TrainLog stage2_log;
};

// Backbone preparation, then stage 1 and stage 2 with seeds derived from
// `seed`. Budgets come from cfg.stage_config().
PipelineResult run_pipeline(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed);

}  // namespace ssmi
