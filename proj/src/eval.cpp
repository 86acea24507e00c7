#include "ssmi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ssmi {

double median(std::vector<double> v) {
    if (v.empty()) throw ContractError("median: empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::size_t argmax_row(const TensorPtr& probs, std::size_t row) {
    const std::size_t n = probs->shape[1];
    const double* p = probs->data.data() + row * n;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

}  // namespace

double token_accuracy(const LvlmModel& model, const std::vector<const SyntheticSample*>& split) {
    if (split.empty()) throw ContractError("token_accuracy: empty split");
    NoGradGuard ng;
    std::size_t correct = 0, total = 0;
    for (const SyntheticSample* s : split) {
        auto probs = model.forward(input_ids(*s, model.config()), raw_tensor(*s));
        for (std::size_t t = 0; t < s->tokens.size(); ++t) {
            correct += argmax_row(probs, t) == s->tokens[t];
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double reconstruction_mse(const LvlmModel& model,
                          const std::vector<const SyntheticSample*>& split) {
    if (split.empty()) throw ContractError("reconstruction_mse: empty split");
    NoGradGuard ng;
    double acc = 0.0;
    for (const SyntheticSample* s : split) {
        auto detail = model.forward_detail(input_ids(*s, model.config()), raw_tensor(*s),
                                           /*need_logits=*/false, /*need_tap=*/true);
        auto targets = gather_rows(model.token_embedding(), target_ids(*s));
        acc += value(mse(detail.ssm_tap, targets));
    }
    return acc / static_cast<double>(split.size());
}

double bleu_n(const std::vector<std::uint32_t>& candidate,
              const std::vector<std::uint32_t>& reference, std::size_t n) {
    if (n < 1) throw ContractError("bleu_n: order must be >= 1");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    std::size_t orders_used = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        if (candidate.size() < k) break;  // no k-grams to score
        const std::size_t total = candidate.size() - k + 1;
        std::map<std::vector<std::uint32_t>, std::size_t> ref_counts;
        if (reference.size() >= k) {
            for (std::size_t i = 0; i + k <= reference.size(); ++i) {
                ++ref_counts[{reference.begin() + i, reference.begin() + i + k}];
            }
        }
        std::map<std::vector<std::uint32_t>, std::size_t> cand_counts;
        for (std::size_t i = 0; i + k <= candidate.size(); ++i) {
            ++cand_counts[{candidate.begin() + i, candidate.begin() + i + k}];
        }
        std::size_t overlap = 0;
        for (const auto& [gram, count] : cand_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) overlap += std::min(count, it->second);
        }
        const double p = overlap > 0
                             ? static_cast<double>(overlap) / static_cast<double>(total)
                             : 1.0 / (2.0 * static_cast<double>(total));
        log_sum += std::log(p);
        ++orders_used;
    }
    if (orders_used == 0) return 0.0;

    const double geo = std::exp(log_sum / static_cast<double>(orders_used));
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return geo * bp;
}

std::vector<std::uint32_t> greedy_decode(const LvlmModel& model, const SyntheticSample& s) {
    NoGradGuard ng;
    std::vector<std::uint32_t> ids{model.config().bos_id()};
    std::vector<std::uint32_t> out;
    auto raw = raw_tensor(s);
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        auto probs = model.forward(ids, raw);
        const auto next = static_cast<std::uint32_t>(argmax_row(probs, ids.size() - 1));
        out.push_back(next);
        ids.push_back(next);
    }
    return out;
}

double mean_bleu4(const LvlmModel& model, const std::vector<const SyntheticSample*>& split) {
    if (split.empty()) throw ContractError("mean_bleu4: empty split");
    double acc = 0.0;
    for (const SyntheticSample* s : split) {
        acc += bleu_n(greedy_decode(model, *s), s->tokens, 4);
    }
    return acc / static_cast<double>(split.size());
}

double method_trainable_ratio(const LvlmModel& model) {
    auto& m = const_cast<LvlmModel&>(model);
    const FreezeMode saved = model.freeze_mode();
    m.set_freeze_mode(FreezeMode::finetune_ssm);
    const double ratio = model.trainable_ratio();
    m.set_freeze_mode(saved);
    return ratio;
}

namespace {

MetricRow eval_row(const LvlmModel& model, const std::vector<const SyntheticSample*>& split) {
    MetricRow row;
    row.ablation = to_string(model.config().ablation);
    row.freeze = to_string(model.freeze_mode());
    row.accuracy = token_accuracy(model, split);
    row.bleu4 = mean_bleu4(model, split);
    row.mse = reconstruction_mse(model, split);
    return row;
}

}  // namespace

EvalReport run_standard(const LvlmModel& model, const Dataset& data) {
    EvalReport rep;
    rep.mode = "standard";
    rep.trainable_ratio = method_trainable_ratio(model);
    rep.chance_accuracy = 1.0 / static_cast<double>(data.spec.vocab);
    rep.rows.push_back(eval_row(model, data.split_ptrs(Split::held_out)));
    return rep;
}

EvalReport run_ablations(const ExperimentConfig& cfg, const Dataset& data,
                         const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ContractError("run_ablations: need at least one seed");
    static constexpr Ablation kConfigs[] = {Ablation::none, Ablation::no_state_dynamics,
                                            Ablation::no_visual};
    auto held = data.split_ptrs(Split::held_out);

    std::map<Ablation, std::vector<double>> acc, bleu, rec;
    double ratio = 0.0;
    for (std::uint64_t seed : seeds) {
        ExperimentConfig base = cfg;
        base.model.ablation = Ablation::none;
        auto backbone = build_frozen_backbone(base, data, seed);
        Rng root(seed);
        const std::uint64_t s1_seed = root.fork(3).next();
        const std::uint64_t s2_seed = root.fork(4).next();
        for (Ablation abl : kConfigs) {
            auto model = backbone->clone(abl);
            TrainConfig s1 = cfg.stage_config(Stage::pretrain);
            s1.seed = s1_seed;  // shared batch order across configurations
            run_stage1(*model, data, s1);
            TrainConfig s2 = cfg.stage_config(Stage::finetune);
            s2.seed = s2_seed;
            run_stage2(*model, data, s2);
            acc[abl].push_back(token_accuracy(*model, held));
            bleu[abl].push_back(mean_bleu4(*model, held));
            rec[abl].push_back(reconstruction_mse(*model, held));
            ratio = method_trainable_ratio(*model);
        }
    }

    EvalReport rep;
    rep.mode = "ablate";
    rep.stage = "finetune";
    rep.seeds = seeds;
    rep.trainable_ratio = ratio;
    rep.chance_accuracy = 1.0 / static_cast<double>(data.spec.vocab);
    for (Ablation abl : kConfigs) {
        MetricRow row;
        row.ablation = to_string(abl);
        row.freeze = to_string(FreezeMode::finetune_ssm);
        row.accuracy = median(acc[abl]);
        row.bleu4 = median(bleu[abl]);
        row.mse = median(rec[abl]);
        rep.rows.push_back(row);
    }
    return rep;
}

EvalReport run_robustness(const LvlmModel& model, const Dataset& data,
                          const std::vector<double>& sigmas, std::uint64_t noise_seed) {
    if (std::find(sigmas.begin(), sigmas.end(), 0.0) == sigmas.end()) {
        throw ContractError("run_robustness: sigmas must include 0");
    }
    auto held = data.split_ptrs(Split::held_out);

    EvalReport rep;
    rep.mode = "robustness";
    rep.trainable_ratio = method_trainable_ratio(model);
    rep.chance_accuracy = 1.0 / static_cast<double>(data.spec.vocab);

    Rng root(noise_seed);
    std::vector<std::pair<double, double>> sigma_acc;
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        Rng rk = root.fork(k + 1);
        std::vector<SyntheticSample> noisy;
        noisy.reserve(held.size());
        std::vector<const SyntheticSample*> ptrs;
        for (const SyntheticSample* s : held) noisy.push_back(add_noise(*s, sigmas[k], rk.next()));
        for (const auto& s : noisy) ptrs.push_back(&s);

        MetricRow row = eval_row(model, ptrs);
        row.sigma = sigmas[k];
        rep.rows.push_back(row);
        sigma_acc.emplace_back(sigmas[k], row.accuracy);
    }

    double clean_acc = 0.0;
    for (const auto& [s, a] : sigma_acc) {
        if (s == 0.0) clean_acc = a;
    }
    for (auto& row : rep.rows) row.delta_accuracy = clean_acc - row.accuracy;

    std::sort(sigma_acc.begin(), sigma_acc.end());
    rep.degradation_monotone = 1;
    for (std::size_t i = 1; i < sigma_acc.size(); ++i) {
        const double d_prev = clean_acc - sigma_acc[i - 1].second;
        const double d_cur = clean_acc - sigma_acc[i].second;
        if (d_cur < d_prev) rep.degradation_monotone = 0;
    }
    return rep;
}

EvalReport run_zero_shot(LvlmModel& model, const Dataset& data) {
    model.set_freeze_mode(FreezeMode::frozen);
    EvalReport rep;
    rep.mode = "zero_shot";
    rep.stage = "pretrain_only";
    rep.trainable_ratio = method_trainable_ratio(model);
    rep.chance_accuracy = 1.0 / static_cast<double>(data.spec.vocab);
    rep.rows.push_back(eval_row(model, data.split_ptrs(Split::held_out)));
    return rep;
}

}  // namespace ssmi
