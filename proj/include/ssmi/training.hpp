#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmi/data.hpp"
#include "ssmi/model.hpp"
#include "ssmi/tensor.hpp"

namespace ssmi {

enum class Stage { pretrain, finetune };

struct TrainConfig {
    Stage stage = Stage::pretrain;
    double lambda = 0.5;  // weight of the reconstruction term in stage 2
    double lr = 1e-3;
    std::size_t steps = 500;
    std::size_t batch_size = 8;
    std::uint64_t seed = 1;
    double grad_clip = 1.0;
    std::size_t log_every = 50;

    void validate() const;
};

struct LossBreakdown {
    double pretrain_term = 0.0;
    double task_term = 0.0;
    double total = 0.0;
    std::size_t step = 0;
    double wall_ms = 0.0;
};

using TrainLog = std::vector<LossBreakdown>;

using Batch = std::vector<const SyntheticSample*>;

struct LossResult {
    TensorPtr loss;
    LossBreakdown breakdown;
};

// Model input is the caption shifted right behind a BOS token; the targets
// are the caption itself (next-token objective).
std::vector<std::uint32_t> input_ids(const SyntheticSample& s, const LvlmConfig& cfg);
const std::vector<std::uint32_t>& target_ids(const SyntheticSample& s);
TensorPtr raw_tensor(const SyntheticSample& s);

// Batch-mean reconstruction loss between the final module's scan output and
// the frozen embedding rows of the target tokens.
LossResult pretrain_loss(const LvlmModel& model, const Batch& batch);
// Batch-mean next-token cross-entropy.
LossResult task_loss(const LvlmModel& model, const Batch& batch);
// lambda * pretrain + (1 - lambda) * task, both terms on the same batch.
LossResult total_loss(const LvlmModel& model, const Batch& batch, double lambda);

// Stage 1: Adam over pretrain_loss with only the state space modules
// trainable. Throws TrainingError on divergence.
TrainLog run_stage1(LvlmModel& model, const Dataset& data, const TrainConfig& cfg);
// Stage 2: Adam over total_loss in finetune_ssm mode.
TrainLog run_stage2(LvlmModel& model, const Dataset& data, const TrainConfig& cfg);
// Full-mode task training used to prepare the frozen backbone.
TrainLog train_backbone(LvlmModel& model, const Dataset& data, const TrainConfig& cfg);

// Plain-text tabular log: "step pretrain task total wall_ms", one row per
// recorded step. wall_ms is the only non-deterministic column.
std::string format_train_log(const TrainLog& log);
void write_train_log(const TrainLog& log, const std::string& path);

}  // namespace ssmi
