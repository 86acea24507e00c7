#include "ssmi/experiment.hpp"

namespace ssmi {

std::unique_ptr<LvlmModel> build_frozen_backbone(const ExperimentConfig& cfg, const Dataset& data,
                                                 std::uint64_t seed) {
    Rng root(seed);
    auto model = std::make_unique<LvlmModel>(cfg.model, seed);
    if (cfg.backbone.steps > 0) {
        TrainConfig bc = cfg.train;
        bc.steps = cfg.backbone.steps;
        bc.lr = cfg.backbone.lr;
        bc.batch_size = cfg.backbone.batch_size;
        bc.seed = root.fork(1).next();
        train_backbone(*model, data, bc);
    }
    model->set_freeze_mode(FreezeMode::frozen);
    model->reinit_ssm(root.fork(2).next());
    return model;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
    Rng root(seed);
    PipelineResult r;
    r.model = build_frozen_backbone(cfg, data, seed);

    TrainConfig s1 = cfg.stage_config(Stage::pretrain);
    s1.seed = root.fork(3).next();
    r.stage1_log = run_stage1(*r.model, data, s1);

    TrainConfig s2 = cfg.stage_config(Stage::finetune);
    s2.seed = root.fork(4).next();
    r.stage2_log = run_stage2(*r.model, data, s2);
    return r;
}

}  // namespace ssmi
