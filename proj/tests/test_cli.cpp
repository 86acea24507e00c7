#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssmi/checkpoint.hpp"
#include "ssmi/commands.hpp"
#include "ssmi/config.hpp"
#include "ssmi/container.hpp"
#include "ssmi/report.hpp"

using namespace ssmi;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("ssmi_cli_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& capture = "") {
    std::string cmd = std::string(SSMI_CLI_PATH) + " " + args + " >" +
                      (capture.empty() ? "/dev/null" : capture) + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

nlohmann::json tiny_config_json(const TempDir& tmp) {
    nlohmann::json j;
    j["model"] = {{"layers", 1},   {"d_model", 4},  {"n_heads", 2}, {"state_size", 2},
                  {"vocab", 5},    {"d_visual", 3}, {"d_raw", 3},   {"max_seq", 6}};
    j["backbone"] = {{"steps", 4}, {"lr", 1e-3}, {"batch_size", 4}};
    j["train"] = {{"seed", 11}, {"steps", 4}, {"batch_size", 4}, {"lr", 1e-3}};
    j["data"] = {{"seed", 19}, {"size", 30}, {"d_raw", 3}, {"seq_len", 3}, {"vocab", 4}};
    j["eval"] = {{"sigmas", {0.0, 0.5}}, {"seeds", {1, 2}}};
    j["paths"] = {{"checkpoint", tmp.file("model.ssmi")},
                  {"report", tmp.file("report.txt")},
                  {"log", tmp.file("train.log")}};
    return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    f << j.dump(2);
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing errors name the field") {
    auto good = R"({"train":{"seed":1,"steps":5},"data":{"seed":2}})";
    CHECK_NOTHROW(parse_config(good));

    try {
        parse_config(R"({"train":{"steps":5},"data":{"seed":2}})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("train.seed") != std::string::npos);
    }
    try {
        parse_config(R"({"train":{"seed":1,"steps":5},"data":{"seed":2},"typo":{}})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("typo") != std::string::npos);
    }
    try {
        parse_config(R"({"train":{"seed":1,"steps":5,"lrr":0.1},"data":{"seed":2}})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("train.lrr") != std::string::npos);
    }
    try {
        parse_config(R"({"train":{"seed":"one","steps":5},"data":{"seed":2}})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("train.seed") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("{not json"), ParseError);

    // defaults are filled in for everything else
    auto cfg = parse_config(good);
    CHECK(cfg.model.layers == 4);
    CHECK(cfg.train.lambda == 0.5);
}

TEST_CASE("pretrain then finetune through the command layer") {
    TempDir tmp;
    auto j = tiny_config_json(tmp);
    const auto cfg_path = tmp.file("cfg.json");
    write_json(cfg_path, j);

    CliOverrides ov;
    ov.out = tmp.file("stage1.ssmi");
    REQUIRE(cmd_pretrain(cfg_path, ov) == kExitOk);
    CHECK(fs::exists(tmp.file("stage1.ssmi")));
    CHECK(fs::exists(tmp.file("train.log")));

    auto loaded = load_checkpoint(tmp.file("stage1.ssmi"));
    CHECK(loaded.meta.stage == "pretrain");

    // determinism audit: identical config, byte-identical checkpoint
    CliOverrides ov2;
    ov2.out = tmp.file("stage1b.ssmi");
    REQUIRE(cmd_pretrain(cfg_path, ov2) == kExitOk);
    CHECK(file_bytes(tmp.file("stage1.ssmi")) == file_bytes(tmp.file("stage1b.ssmi")));

    CliOverrides fo;
    fo.out = tmp.file("stage2.ssmi");
    fo.lambda = 0.25;
    REQUIRE(cmd_finetune(cfg_path, tmp.file("stage1.ssmi"), fo) == kExitOk);
    auto stage2 = load_checkpoint(tmp.file("stage2.ssmi"));
    CHECK(stage2.meta.stage == "finetune");
    CHECK(stage2.meta.overrides.at("lambda") == 0.25);
    CHECK(stage2.config.train.lambda == 0.25);

    // frozen backbone tensors byte-identical between the two checkpoints
    auto t1 = loaded.model->named_tensors();
    auto t2 = stage2.model->named_tensors();
    for (std::size_t i = 0; i < t1.size(); ++i) {
        if (!t1[i].is_ssm) CHECK(t1[i].t->data == t2[i].t->data);
    }

    // finetuning from a finetune-stage checkpoint is a stage error
    CHECK(cmd_finetune(cfg_path, tmp.file("stage2.ssmi"), fo) == kExitCompat);

    // an incompatible model config lists the differing field
    j["model"]["d_model"] = 8;
    j["model"]["n_heads"] = 4;
    const auto bad_cfg = tmp.file("bad.json");
    write_json(bad_cfg, j);
    CHECK(cmd_finetune(bad_cfg, tmp.file("stage1.ssmi"), fo) == kExitCompat);
}

TEST_CASE("eval command modes") {
    TempDir tmp;
    auto j = tiny_config_json(tmp);
    const auto cfg_path = tmp.file("cfg.json");
    write_json(cfg_path, j);

    CliOverrides ov;
    ov.out = tmp.file("s1.ssmi");
    REQUIRE(cmd_pretrain(cfg_path, ov) == kExitOk);
    CliOverrides fo;
    fo.out = tmp.file("s2.ssmi");
    REQUIRE(cmd_finetune(cfg_path, tmp.file("s1.ssmi"), fo) == kExitOk);

    SUBCASE("standard") {
        CliOverrides eo;
        eo.out = tmp.file("std.txt");
        REQUIRE(cmd_eval(tmp.file("s2.ssmi"), "standard", std::nullopt, eo) == kExitOk);
        auto rep = read_report(tmp.file("std.txt"));
        CHECK(rep.mode == "standard");
        CHECK(rep.stage == "finetune");
        REQUIRE(rep.rows.size() == 1);
        auto loaded = load_checkpoint(tmp.file("s2.ssmi"));
        loaded.model->set_freeze_mode(FreezeMode::finetune_ssm);
        CHECK(rep.trainable_ratio == loaded.model->trainable_ratio());
    }
    SUBCASE("robustness") {
        CliOverrides eo;
        eo.out = tmp.file("rob.txt");
        REQUIRE(cmd_eval(tmp.file("s2.ssmi"), "robustness", std::nullopt, eo) == kExitOk);
        auto rep = read_report(tmp.file("rob.txt"));
        REQUIRE(rep.rows.size() == 2);
        CHECK(rep.rows[0].sigma == 0.0);
        CHECK(rep.rows[0].delta_accuracy == 0.0);
    }
    SUBCASE("zero-shot wants a stage-1 checkpoint") {
        CliOverrides eo;
        eo.out = tmp.file("zs.txt");
        CHECK(cmd_eval(tmp.file("s2.ssmi"), "zero_shot", std::nullopt, eo) == kExitCompat);
        REQUIRE(cmd_eval(tmp.file("s1.ssmi"), "zero_shot", std::nullopt, eo) == kExitOk);
        auto rep = read_report(tmp.file("zs.txt"));
        CHECK(rep.stage == "pretrain_only");
    }
    SUBCASE("ablate") {
        CliOverrides eo;
        eo.out = tmp.file("abl.txt");
        REQUIRE(cmd_eval(tmp.file("s2.ssmi"), "ablate", std::nullopt, eo) == kExitOk);
        auto rep = read_report(tmp.file("abl.txt"));
        CHECK(rep.rows.size() == 3);
    }
    SUBCASE("corrupt checkpoint is a format error") {
        auto bytes = file_bytes(tmp.file("s2.ssmi"));
        bytes[bytes.size() / 2] ^= 0x01;
        std::ofstream f(tmp.file("s2.ssmi"), std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), bytes.size());
        f.close();
        CliOverrides eo;
        CHECK(cmd_eval(tmp.file("s2.ssmi"), "standard", std::nullopt, eo) == kExitFormat);
    }
    SUBCASE("unknown mode") {
        CliOverrides eo;
        CHECK(cmd_eval(tmp.file("s2.ssmi"), "sideways", std::nullopt, eo) == kExitParse);
    }
}

TEST_CASE("spawned binary: exit codes and report pretty-printer") {
    TempDir tmp;
    auto j = tiny_config_json(tmp);
    const auto cfg_path = tmp.file("cfg.json");
    write_json(cfg_path, j);

    REQUIRE(run("pretrain --config " + cfg_path + " --out " + tmp.file("m.ssmi")) == 0);
    CHECK(run("eval --checkpoint " + tmp.file("m.ssmi") + " --mode zero_shot --out " +
              tmp.file("r.txt")) == 0);
    CHECK(run("report " + tmp.file("r.txt"), tmp.file("pretty.txt")) == 0);
    CHECK(slurp(tmp.file("pretty.txt")).find("zero_shot") != std::string::npos);

    // missing required field -> exit 2, message names the field
    j["train"].erase("seed");
    write_json(tmp.file("bad.json"), j);
    CHECK(run("pretrain --config " + tmp.file("bad.json"), tmp.file("err.txt")) == kExitParse);
    CHECK(slurp(tmp.file("err.txt")).find("train.seed") != std::string::npos);

    CHECK(run("report " + tmp.file("nonexistent.txt")) == kExitParse);
    CHECK(run("noncommand") == kExitUsage);
    CHECK(run("pretrain") == kExitUsage);  // missing --config
}

TEST_CASE("flag overrides are applied and recorded") {
    TempDir tmp;
    auto j = tiny_config_json(tmp);
    const auto cfg_path = tmp.file("cfg.json");
    write_json(cfg_path, j);

    CliOverrides ov;
    ov.out = tmp.file("o.ssmi");
    ov.steps = 2;
    ov.seed = 123;
    REQUIRE(cmd_pretrain(cfg_path, ov) == kExitOk);
    auto c = read_container(tmp.file("o.ssmi"));
    auto meta = nlohmann::json::parse(c.meta_json);
    CHECK(meta.at("overrides").at("steps") == 2);
    CHECK(meta.at("overrides").at("seed") == 123);
    CHECK(meta.at("seed") == 123);
    CHECK(meta.at("config").at("train").at("pretrain_steps") == 2);
}
