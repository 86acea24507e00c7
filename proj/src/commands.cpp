#include "ssmi/commands.hpp"

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "ssmi/checkpoint.hpp"
#include "ssmi/eval.hpp"
#include "ssmi/experiment.hpp"
#include "ssmi/report.hpp"

namespace ssmi {

namespace {

// Applies flag overrides onto the effective config and records them for the
// checkpoint metadata.
nlohmann::json apply_overrides(ExperimentConfig& cfg, const CliOverrides& ov, Stage stage) {
    nlohmann::json rec = nlohmann::json::object();
    if (ov.seed) {
        cfg.train.seed = *ov.seed;
        rec["seed"] = *ov.seed;
    }
    if (ov.steps) {
        cfg.train.steps = *ov.steps;
        if (stage == Stage::pretrain) cfg.pretrain_steps = *ov.steps;
        else cfg.finetune_steps = *ov.steps;
        rec["steps"] = *ov.steps;
    }
    if (ov.lr) {
        cfg.train.lr = *ov.lr;
        if (stage == Stage::pretrain) cfg.pretrain_lr = *ov.lr;
        else cfg.finetune_lr = *ov.lr;
        rec["lr"] = *ov.lr;
    }
    if (ov.lambda) {
        cfg.train.lambda = *ov.lambda;
        rec["lambda"] = *ov.lambda;
    }
    // Path flags only redirect outputs; they stay out of the metadata so the
    // checkpoint bytes depend on (config, seed) alone.
    cfg.validate();
    return rec;
}

int to_exit_code(const Error& e) {
    if (dynamic_cast<const ParseError*>(&e)) return kExitParse;
    if (dynamic_cast<const CompatibilityError*>(&e)) return kExitCompat;
    if (dynamic_cast<const TrainingError*>(&e)) return kExitTraining;
    if (dynamic_cast<const FormatError*>(&e)) return kExitFormat;
    if (dynamic_cast<const ContractError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const IndexError*>(&e) || dynamic_cast<const StabilityError*>(&e)) {
        return kExitContract;
    }
    return kExitInternal;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return to_exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace

int cmd_pretrain(const std::string& config_path, const CliOverrides& ov) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        nlohmann::json overrides = apply_overrides(cfg, ov, Stage::pretrain);

        Dataset data = generate(cfg.data);
        auto model = build_frozen_backbone(cfg, data, cfg.train.seed);
        TrainConfig s1 = cfg.stage_config(Stage::pretrain);
        TrainLog log = run_stage1(*model, data, s1);
        write_train_log(log, ov.log.value_or(cfg.paths.log));

        CheckpointMeta meta;
        meta.stage = "pretrain";
        meta.step = s1.steps;
        meta.seed = cfg.train.seed;
        meta.config = config_to_json(cfg);
        meta.overrides = overrides;
        const std::string out = ov.out.value_or(cfg.paths.checkpoint);
        save_checkpoint(*model, meta, out);

        std::printf("stage 1 done: %zu steps, loss %.6f -> %.6f, checkpoint %s\n", s1.steps,
                    log.front().total, log.back().total, out.c_str());
        return kExitOk;
    });
}

int cmd_finetune(const std::string& config_path, const std::string& init_checkpoint,
                 const CliOverrides& ov) {
    return guarded([&] {
        ExperimentConfig cfg = load_config(config_path);
        nlohmann::json overrides = apply_overrides(cfg, ov, Stage::finetune);

        LoadedCheckpoint init = load_checkpoint(init_checkpoint);
        if (init.meta.stage != "pretrain") {
            throw CompatibilityError("init checkpoint stage is '" + init.meta.stage +
                                     "', finetune requires 'pretrain'");
        }
        auto diff = config_diff(cfg.model, init.config.model);
        if (!diff.empty()) {
            std::string msg = "config does not match init checkpoint:";
            for (const auto& d : diff) msg += " " + d + ";";
            throw CompatibilityError(msg);
        }

        Dataset data = generate(cfg.data);
        TrainConfig s2 = cfg.stage_config(Stage::finetune);
        TrainLog log = run_stage2(*init.model, data, s2);
        write_train_log(log, ov.log.value_or(cfg.paths.log));

        CheckpointMeta meta;
        meta.stage = "finetune";
        meta.step = init.meta.step + s2.steps;
        meta.seed = cfg.train.seed;
        meta.config = config_to_json(cfg);
        meta.overrides = overrides;
        const std::string out = ov.out.value_or(cfg.paths.checkpoint);
        save_checkpoint(*init.model, meta, out);

        std::printf("stage 2 done: %zu steps, lambda %.3f, loss %.6f -> %.6f, checkpoint %s\n",
                    s2.steps, s2.lambda, log.front().total, log.back().total, out.c_str());
        return kExitOk;
    });
}

int cmd_eval(const std::string& checkpoint_path, const std::string& mode,
             const std::optional<std::string>& config_path, const CliOverrides& ov) {
    return guarded([&] {
        LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
        ExperimentConfig cfg = loaded.config;
        if (config_path) {
            cfg = load_config(*config_path);
            auto diff = config_diff(cfg.model, loaded.config.model);
            if (!diff.empty()) {
                std::string msg = "config does not match checkpoint:";
                for (const auto& d : diff) msg += " " + d + ";";
                throw CompatibilityError(msg);
            }
        }
        Dataset data = generate(cfg.data);

        EvalReport rep;
        if (mode == "standard") {
            rep = run_standard(*loaded.model, data);
            rep.stage = loaded.meta.stage;
        } else if (mode == "ablate") {
            rep = run_ablations(cfg, data, cfg.eval.seeds);
        } else if (mode == "robustness") {
            rep = run_robustness(*loaded.model, data, cfg.eval.sigmas,
                                 cfg.data.seed ^ 0x6e015eull);
            rep.stage = loaded.meta.stage;
        } else if (mode == "zero_shot") {
            if (loaded.meta.stage != "pretrain") {
                throw CompatibilityError("zero_shot needs a stage-1-only checkpoint, got stage '" +
                                         loaded.meta.stage + "'");
            }
            rep = run_zero_shot(*loaded.model, data);
        } else {
            throw ParseError("unknown eval mode '" + mode + "'");
        }

        const std::string out = ov.out.value_or(cfg.paths.report);
        write_report(rep, out);
        std::printf("report written to %s\n", out.c_str());
        std::fputs(pretty_report(rep).c_str(), stdout);
        return kExitOk;
    });
}

int cmd_report(const std::string& report_path) {
    return guarded([&] {
        EvalReport rep = read_report(report_path);
        std::fputs(pretty_report(rep).c_str(), stdout);
        return kExitOk;
    });
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"SSMI: state space memory fine-tuning of a toy vision-language model"};
    app.require_subcommand(1);

    std::string config_path, init_ckpt, ckpt_path, mode = "standard", report_path;
    std::optional<std::string> eval_config;
    CliOverrides ov;

    auto add_train_flags = [&](CLI::App* c) {
        c->add_option("--config", config_path, "experiment config JSON")->required();
        c->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { ov.seed = v; }, "override train.seed");
        c->add_option_function<std::size_t>(
            "--steps", [&](std::size_t v) { ov.steps = v; }, "override step count");
        c->add_option_function<double>(
            "--lr", [&](double v) { ov.lr = v; }, "override learning rate");
        c->add_option_function<double>(
            "--lambda", [&](double v) { ov.lambda = v; }, "override loss mixing weight");
        c->add_option_function<std::string>(
            "--out", [&](std::string v) { ov.out = v; }, "checkpoint output path");
        c->add_option_function<std::string>(
            "--log", [&](std::string v) { ov.log = v; }, "training log path");
    };

    CLI::App* pre = app.add_subcommand("pretrain", "stage 1: reconstruction-train the modules");
    add_train_flags(pre);

    CLI::App* fin = app.add_subcommand("finetune", "stage 2: task fine-tuning from a checkpoint");
    add_train_flags(fin);
    fin->add_option("--init", init_ckpt, "stage-1 checkpoint")->required();

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
    ev->add_option("--mode", mode, "standard|ablate|robustness|zero_shot");
    ev->add_option_function<std::string>(
        "--config", [&](std::string v) { eval_config = v; }, "config overriding the embedded one");
    ev->add_option_function<std::string>(
        "--out", [&](std::string v) { ov.out = v; }, "report output path");

    CLI::App* ab = app.add_subcommand("ablate", "alias for eval --mode ablate");
    ab->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
    ab->add_option_function<std::string>(
        "--config", [&](std::string v) { eval_config = v; }, "config overriding the embedded one");
    ab->add_option_function<std::string>(
        "--out", [&](std::string v) { ov.out = v; }, "report output path");

    CLI::App* rp = app.add_subcommand("report", "pretty-print a report file");
    rp->add_option("file", report_path, "report file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    if (pre->parsed()) return cmd_pretrain(config_path, ov);
    if (fin->parsed()) return cmd_finetune(config_path, init_ckpt, ov);
    if (ev->parsed()) return cmd_eval(ckpt_path, mode, eval_config, ov);
    if (ab->parsed()) return cmd_eval(ckpt_path, "ablate", eval_config, ov);
    if (rp->parsed()) return cmd_report(report_path);
    return kExitUsage;
}

}  // namespace ssmi
