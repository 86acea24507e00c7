#include <doctest.h>

#include <cmath>

#include "ssmi/eval.hpp"
#include "ssmi/report.hpp"

using namespace ssmi;

namespace {

ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.model.layers = 1;
    cfg.model.d_model = 4;
    cfg.model.n_heads = 2;
    cfg.model.state_size = 2;
    cfg.model.vocab = 5;
    cfg.model.d_visual = 3;
    cfg.model.d_raw = 3;
    cfg.model.max_seq = 6;
    cfg.data.size = 30;
    cfg.data.d_raw = 3;
    cfg.data.seq_len = 3;
    cfg.data.vocab = 4;
    cfg.data.seed = 55;
    cfg.backbone.steps = 4;
    cfg.backbone.batch_size = 4;
    cfg.train.steps = 4;
    cfg.train.batch_size = 4;
    cfg.train.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("median") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(median({7.0}) == 7.0);
    CHECK_THROWS_AS(median({}), ContractError);
}

TEST_CASE("token accuracy against a hand count") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 61);
    std::vector<const SyntheticSample*> split{&ds.samples[0], &ds.samples[1], &ds.samples[2]};

    std::size_t correct = 0, total = 0;
    {
        NoGradGuard ng;
        for (auto* s : split) {
            auto probs = m.forward(input_ids(*s, cfg.model), raw_tensor(*s));
            for (std::size_t t = 0; t < s->tokens.size(); ++t) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < cfg.model.vocab; ++j) {
                    if (probs->data[t * cfg.model.vocab + j] >
                        probs->data[t * cfg.model.vocab + best]) {
                        best = j;
                    }
                }
                correct += best == s->tokens[t];
                ++total;
            }
        }
    }
    CHECK(token_accuracy(m, split) == static_cast<double>(correct) / total);
}

TEST_CASE("constant predictor sits at chance on balanced binary data") {
    auto cfg = tiny_experiment();
    cfg.model.vocab = 3;
    cfg.data.vocab = 2;
    cfg.data.size = 400;
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 63);
    auto& dec = const_cast<TensorPtr&>(m.decoder_head());
    std::fill(dec->data.begin(), dec->data.end(), 0.0);  // argmax always picks id 0
    const double acc = token_accuracy(m, ds.split_ptrs(Split::train));
    CHECK(acc == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("bleu oracle cases") {
    using Seq = std::vector<std::uint32_t>;

    SUBCASE("perfect match") {
        for (std::size_t len = 1; len <= 6; ++len) {
            Seq x;
            for (std::size_t i = 0; i < len; ++i) x.push_back(static_cast<std::uint32_t>(i));
            CHECK(bleu_n(x, x, 4) == 1.0);
        }
    }
    SUBCASE("worked five-token example") {
        const Seq cand{1, 2, 3, 4, 5}, ref{1, 2, 3, 4, 6};
        const double expect =
            std::exp(0.25 * std::log((4.0 / 5.0) * (3.0 / 4.0) * (2.0 / 3.0) * (1.0 / 2.0)));
        CHECK(std::abs(bleu_n(cand, ref, 4) - expect) < 1e-12);
    }
    SUBCASE("empty candidate") {
        CHECK(bleu_n({}, {1, 2, 3}, 4) == 0.0);
    }
    SUBCASE("zero overlap hits the smoothing floor") {
        const Seq cand{1, 2, 3}, ref{4, 5, 6};
        // every precision smoothed: 1/6, 1/4, 1/2
        const double floor_val =
            std::exp((std::log(1.0 / 6.0) + std::log(1.0 / 4.0) + std::log(1.0 / 2.0)) / 3.0);
        CHECK(bleu_n(cand, ref, 4) == doctest::Approx(floor_val).epsilon(1e-12));
        CHECK(bleu_n(cand, ref, 4) < 0.5);
    }
    SUBCASE("reversal strictly reduces higher-order scores") {
        const Seq cand{1, 2, 3, 4, 5}, rev{5, 4, 3, 2, 1};
        for (std::size_t n = 2; n <= 4; ++n) {
            CHECK(bleu_n(rev, cand, n) < bleu_n(cand, cand, n));
        }
        CHECK(bleu_n(rev, cand, 1) == 1.0);  // unigram counts are order-blind
    }
    SUBCASE("bounded in [0,1] on random pairs") {
        Rng rng(64);
        for (int trial = 0; trial < 200; ++trial) {
            Seq a, b;
            const std::size_t la = 1 + rng.below(8), lb = 1 + rng.below(8);
            for (std::size_t i = 0; i < la; ++i) a.push_back(static_cast<std::uint32_t>(rng.below(5)));
            for (std::size_t i = 0; i < lb; ++i) b.push_back(static_cast<std::uint32_t>(rng.below(5)));
            const double v = bleu_n(a, b, 4);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    SUBCASE("brevity penalty punishes short candidates") {
        const Seq ref{1, 2, 3, 4, 5, 6};
        const Seq four{1, 2, 3, 4};
        CHECK(bleu_n(four, ref, 1) == doctest::Approx(std::exp(1.0 - 6.0 / 4.0)).epsilon(1e-12));
    }
}

TEST_CASE("greedy decoding is deterministic and caption-length") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 65);
    auto out = greedy_decode(m, ds.samples[0]);
    CHECK(out.size() == ds.samples[0].tokens.size());
    CHECK(out == greedy_decode(m, ds.samples[0]));
    for (auto id : out) CHECK(id < cfg.model.vocab);
}

TEST_CASE("standard evaluation report is deterministic") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 67);
    m.set_freeze_mode(FreezeMode::finetune_ssm);
    auto r1 = run_standard(m, ds);
    auto r2 = run_standard(m, ds);
    CHECK(format_report(r1) == format_report(r2));
    REQUIRE(r1.rows.size() == 1);
    CHECK(r1.trainable_ratio == m.trainable_ratio());
    CHECK(r1.chance_accuracy == 0.25);
    CHECK(m.freeze_mode() == FreezeMode::finetune_ssm);  // ratio probe restored the mode
}

TEST_CASE("robustness sweep") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 69);

    CHECK_THROWS_AS(run_robustness(m, ds, {0.5, 1.0}, 1), ContractError);

    auto rep = run_robustness(m, ds, {0.0, 0.5, 10.0}, 7);
    REQUIRE(rep.rows.size() == 3);
    auto clean = run_standard(m, ds);
    CHECK(rep.rows[0].sigma == 0.0);
    CHECK(rep.rows[0].accuracy == clean.rows[0].accuracy);  // sigma 0 row is the clean eval
    CHECK(rep.rows[0].delta_accuracy == 0.0);
    CHECK((rep.degradation_monotone == 0 || rep.degradation_monotone == 1));
    for (const auto& row : rep.rows) {
        CHECK(row.delta_accuracy == rep.rows[0].accuracy - row.accuracy);
    }
}

TEST_CASE("zero-shot evaluation marks the stage flag") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    LvlmModel m(cfg.model, 71);
    auto rep = run_zero_shot(m, ds);
    CHECK(rep.stage == "pretrain_only");
    CHECK(rep.mode == "zero_shot");
    CHECK(m.freeze_mode() == FreezeMode::frozen);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].mse > 0.0);
}

TEST_CASE("ablation protocol produces one aggregated row per configuration") {
    auto cfg = tiny_experiment();
    auto ds = generate(cfg.data);
    auto rep = run_ablations(cfg, ds, {1, 2});
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].ablation == "none");
    CHECK(rep.rows[1].ablation == "no_state_dynamics");
    CHECK(rep.rows[2].ablation == "no_visual");
    CHECK(rep.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(rep.aggregation == "median");
    for (const auto& row : rep.rows) {
        CHECK(row.accuracy >= 0.0);
        CHECK(row.accuracy <= 1.0);
    }
}

TEST_CASE("report format round trip") {
    EvalReport rep;
    rep.mode = "robustness";
    rep.stage = "finetune";
    rep.seeds = {1, 2, 3};
    rep.trainable_ratio = 0.12729524652292252;
    rep.chance_accuracy = 0.25;
    rep.degradation_monotone = 1;
    MetricRow row;
    row.ablation = "none";
    row.sigma = 0.5;
    row.freeze = "finetune_ssm";
    row.accuracy = 0.875;
    row.bleu4 = 0.6640625;
    row.mse = 0.03125;
    row.delta_accuracy = 0.125;
    rep.rows.push_back(row);

    const std::string text = format_report(rep);
    auto back = parse_report(text);
    CHECK(format_report(back) == text);
    CHECK(back.rows[0].bleu4 == row.bleu4);
    CHECK(back.seeds == rep.seeds);
    CHECK(back.degradation_monotone == 1);

    CHECK_THROWS_AS(parse_report("not a report"), ParseError);
    const std::string pretty = pretty_report(rep);
    CHECK(pretty.find("finetune_ssm") != std::string::npos);
    CHECK(pretty.find("0.127295") != std::string::npos);
}
