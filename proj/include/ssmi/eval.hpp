#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmi/experiment.hpp"

namespace ssmi {

struct MetricRow {
    std::string ablation = "-";
    double sigma = 0.0;
    std::string freeze = "-";
    double accuracy = 0.0;
    double bleu4 = 0.0;
    double mse = 0.0;
    double delta_accuracy = 0.0;  // robustness: accuracy(0) - accuracy(sigma)
};

struct EvalReport {
    std::string mode;            // standard | ablate | robustness | zero_shot
    std::string stage = "none";  // none | pretrain | finetune | pretrain_only
    double trainable_ratio = 0.0;
    double efficiency_target_ratio = 0.005;  // published SSMI figure, for comparison
    double chance_accuracy = 0.0;
    std::string aggregation = "median";
    std::vector<std::uint64_t> seeds;
    int degradation_monotone = -1;  // robustness: 1/0; -1 elsewhere
    std::vector<MetricRow> rows;
};

double median(std::vector<double> v);

// Fraction of teacher-forced next-token argmax predictions matching targets.
double token_accuracy(const LvlmModel& model, const std::vector<const SyntheticSample*>& split);
// Mean over samples of the stage-1 reconstruction objective.
double reconstruction_mse(const LvlmModel& model,
                          const std::vector<const SyntheticSample*>& split);

// Single-reference BLEU: geometric mean of modified n-gram precisions for
// orders 1..n times a brevity penalty. Orders the candidate is too short to
// form are skipped; a zero-overlap order contributes 1/(2 * candidate n-gram
// count). Empty candidate scores 0.
double bleu_n(const std::vector<std::uint32_t>& candidate,
              const std::vector<std::uint32_t>& reference, std::size_t n);

std::vector<std::uint32_t> greedy_decode(const LvlmModel& model, const SyntheticSample& s);
double mean_bleu4(const LvlmModel& model, const std::vector<const SyntheticSample*>& split);

// The Eq. 10 figure of merit: trainable fraction with the SSM-only mask,
// regardless of the model's current freeze mode.
double method_trainable_ratio(const LvlmModel& model);

EvalReport run_standard(const LvlmModel& model, const Dataset& data);

// Trains {none, no_state_dynamics, no_visual} from a shared per-seed frozen
// backbone and reports per-configuration medians across seeds.
EvalReport run_ablations(const ExperimentConfig& cfg, const Dataset& data,
                         const std::vector<std::uint64_t>& seeds);

// Held-out metrics under additive Gaussian input noise per sigma; sigmas must
// include 0. Degradation monotonicity is reported, not asserted.
EvalReport run_robustness(const LvlmModel& model, const Dataset& data,
                          const std::vector<double>& sigmas, std::uint64_t noise_seed);

// Frozen-mode task evaluation of a stage-1-only model.
EvalReport run_zero_shot(LvlmModel& model, const Dataset& data);

}  // namespace ssmi
