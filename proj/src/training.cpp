#include "ssmi/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "ssmi/container.hpp"

namespace ssmi {

void TrainConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ContractError("train config: lambda must be in [0,1], got " + std::to_string(lambda));
    }
    if (lr < 0.0 || !std::isfinite(lr)) throw ContractError("train config: lr must be >= 0");
    if (steps < 1) throw ContractError("train config: steps must be >= 1");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (grad_clip <= 0.0) throw ContractError("train config: grad_clip must be > 0");
}

std::vector<std::uint32_t> input_ids(const SyntheticSample& s, const LvlmConfig& cfg) {
    std::vector<std::uint32_t> in;
    in.reserve(s.tokens.size());
    in.push_back(cfg.bos_id());
    in.insert(in.end(), s.tokens.begin(), s.tokens.end() - 1);
    return in;
}

const std::vector<std::uint32_t>& target_ids(const SyntheticSample& s) { return s.tokens; }

TensorPtr raw_tensor(const SyntheticSample& s) {
    return tensor({s.raw_visual.size()}, s.raw_visual);
}

LossResult pretrain_loss(const LvlmModel& model, const Batch& batch) {
    if (batch.empty()) throw ContractError("pretrain_loss: empty batch");
    TensorPtr acc;
    for (const SyntheticSample* s : batch) {
        auto detail = model.forward_detail(input_ids(*s, model.config()), raw_tensor(*s),
                                           /*need_logits=*/false, /*need_tap=*/true);
        auto targets = gather_rows(model.token_embedding(), target_ids(*s));
        auto li = mse(detail.ssm_tap, targets);
        acc = acc ? add(acc, li) : li;
    }
    auto loss = scale(acc, 1.0 / static_cast<double>(batch.size()));
    LossBreakdown b;
    b.pretrain_term = value(loss);
    b.task_term = 0.0;
    b.total = b.pretrain_term;
    return {loss, b};
}

LossResult task_loss(const LvlmModel& model, const Batch& batch) {
    if (batch.empty()) throw ContractError("task_loss: empty batch");
    TensorPtr acc;
    for (const SyntheticSample* s : batch) {
        auto detail = model.forward_detail(input_ids(*s, model.config()), raw_tensor(*s),
                                           /*need_logits=*/true, /*need_tap=*/false);
        auto li = cross_entropy(detail.logits, target_ids(*s));
        acc = acc ? add(acc, li) : li;
    }
    auto loss = scale(acc, 1.0 / static_cast<double>(batch.size()));
    LossBreakdown b;
    b.pretrain_term = 0.0;
    b.task_term = value(loss);
    b.total = b.task_term;
    return {loss, b};
}

LossResult total_loss(const LvlmModel& model, const Batch& batch, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ContractError("total_loss: lambda must be in [0,1], got " + std::to_string(lambda));
    }
    if (batch.empty()) throw ContractError("total_loss: empty batch");
    TensorPtr pre_acc, task_acc;
    for (const SyntheticSample* s : batch) {
        auto detail = model.forward_detail(input_ids(*s, model.config()), raw_tensor(*s),
                                           /*need_logits=*/true, /*need_tap=*/true);
        auto targets = gather_rows(model.token_embedding(), target_ids(*s));
        auto lp = mse(detail.ssm_tap, targets);
        auto lt = cross_entropy(detail.logits, target_ids(*s));
        pre_acc = pre_acc ? add(pre_acc, lp) : lp;
        task_acc = task_acc ? add(task_acc, lt) : lt;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    auto pre = scale(pre_acc, inv);
    auto task = scale(task_acc, inv);
    auto total = add(scale(pre, lambda), scale(task, 1.0 - lambda));
    LossBreakdown b;
    b.pretrain_term = value(pre);
    b.task_term = value(task);
    b.total = b.pretrain_term * lambda + b.task_term * (1.0 - lambda);
    return {total, b};
}

namespace {

using Clock = std::chrono::steady_clock;

TrainLog run_loop(LvlmModel& model, const Dataset& data, const TrainConfig& cfg,
                  const std::function<LossResult(const Batch&)>& loss_fn) {
    cfg.validate();
    if (data.train_idx.empty()) throw ContractError("training: dataset has no train split");
    if (data.spec.vocab >= model.config().vocab) {
        throw ContractError("training: dataset vocab must stay below the model vocab (BOS slot)");
    }

    Adam opt(model.trainable_tensors(), cfg.lr);
    BatchIterator batches(data, data.train_idx, cfg.batch_size, cfg.seed);
    TrainLog log;
    log.reserve(cfg.steps);
    const auto start = Clock::now();
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        tape().clear();
        Batch batch = batches.next();
        LossResult r;
        try {
            r = loss_fn(batch);
        } catch (const Error& e) {
            throw TrainingError(step, std::string("diverged: ") + e.what());
        }
        if (!std::isfinite(r.breakdown.total)) {
            throw TrainingError(step, "diverged: loss is not finite");
        }
        if (!opt.params().empty()) {
            backward(r.loss);
            // Trainable parameters an ablation keeps off the loss path have a
            // zero gradient, not a missing one.
            for (const auto& p : opt.params()) p->ensure_grad();
            opt.clip_grad_norm(cfg.grad_clip);
            opt.step();
            model.enforce_ssm_stability();
        }
        r.breakdown.step = step;
        r.breakdown.wall_ms =
            std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        log.push_back(r.breakdown);
    }
    tape().clear();
    return log;
}

}  // namespace

TrainLog run_stage1(LvlmModel& model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.stage != Stage::pretrain) {
        throw ContractError("run_stage1: config stage must be pretrain");
    }
    model.set_freeze_mode(FreezeMode::pretrain_ssm);
    return run_loop(model, data, cfg, [&](const Batch& b) { return pretrain_loss(model, b); });
}

TrainLog run_stage2(LvlmModel& model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.stage != Stage::finetune) {
        throw ContractError("run_stage2: config stage must be finetune");
    }
    model.set_freeze_mode(FreezeMode::finetune_ssm);
    return run_loop(model, data, cfg,
                    [&](const Batch& b) { return total_loss(model, b, cfg.lambda); });
}

TrainLog train_backbone(LvlmModel& model, const Dataset& data, const TrainConfig& cfg) {
    model.set_freeze_mode(FreezeMode::full);
    return run_loop(model, data, cfg, [&](const Batch& b) { return task_loss(model, b); });
}

std::string format_train_log(const TrainLog& log) {
    std::string out = "# step pretrain task total wall_ms\n";
    char line[160];
    for (const auto& b : log) {
        std::snprintf(line, sizeof(line), "%zu %.17g %.17g %.17g %.3f\n", b.step, b.pretrain_term,
                      b.task_term, b.total, b.wall_ms);
        out += line;
    }
    return out;
}

void write_train_log(const TrainLog& log, const std::string& path) {
    write_file_atomic(path, format_train_log(log));
}

}  // namespace ssmi
