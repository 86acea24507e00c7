#include "ssmi/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ssmi {

namespace {

using nlohmann::json;

// Wraps field access so every failure names the offending field path.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ParseError("config field '" + path_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, key, out);
    }

    template <typename T>
    void require(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            throw ParseError("missing required field '" + path_ + "." + key + "'");
        }
        read(*it, key, out);
    }

    bool has(const char* key) const { return j_.contains(key); }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ParseError("unknown field '" + path_ + "." + it.key() + "'");
            }
        }
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

private:
    template <typename T>
    void read(const json& v, const char* key, T& out) {
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ParseError("field '" + path_ + "." + key + "' has the wrong type");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    data.validate();
    if (model.d_raw != data.d_raw) {
        throw ParseError("model.d_raw (" + std::to_string(model.d_raw) +
                         ") must equal data.d_raw (" + std::to_string(data.d_raw) + ")");
    }
    if (data.vocab >= model.vocab) {
        throw ParseError("data.vocab must be smaller than model.vocab (one id is reserved)");
    }
    if (data.seq_len > model.max_seq) {
        throw ParseError("data.seq_len exceeds model.max_seq");
    }
    if (eval.sigmas.empty() || eval.seeds.empty()) {
        throw ParseError("eval.sigmas and eval.seeds must be nonempty");
    }
    if (paths.checkpoint.empty() || paths.report.empty() || paths.log.empty()) {
        throw ParseError("paths entries must be nonempty");
    }
}

TrainConfig ExperimentConfig::stage_config(Stage stage) const {
    TrainConfig c = train;
    c.stage = stage;
    if (stage == Stage::pretrain) {
        if (pretrain_steps > 0) c.steps = pretrain_steps;
        if (pretrain_lr > 0.0) c.lr = pretrain_lr;
    } else {
        if (finetune_steps > 0) c.steps = finetune_steps;
        if (finetune_lr > 0.0) c.lr = finetune_lr;
    }
    return c;
}

LvlmConfig model_config_from_json(const nlohmann::json& j) {
    LvlmConfig m;
    Section s(j, "model");
    s.get("layers", m.layers);
    s.get("d_model", m.d_model);
    s.get("n_heads", m.n_heads);
    s.get("state_size", m.state_size);
    s.get("vocab", m.vocab);
    s.get("d_visual", m.d_visual);
    s.get("d_raw", m.d_raw);
    s.get("max_seq", m.max_seq);
    s.get("ssm_scale", m.ssm_scale);
    std::string visual_mode = to_string(m.visual_mode);
    std::string ablation = to_string(m.ablation);
    s.get("visual_mode", visual_mode);
    s.get("ablation", ablation);
    s.reject_unknown();
    m.visual_mode = visual_mode_from_string(visual_mode);
    m.ablation = ablation_from_string(ablation);
    return m;
}

nlohmann::json model_config_to_json(const LvlmConfig& m) {
    return json{{"layers", m.layers},
                {"d_model", m.d_model},
                {"n_heads", m.n_heads},
                {"state_size", m.state_size},
                {"vocab", m.vocab},
                {"d_visual", m.d_visual},
                {"d_raw", m.d_raw},
                {"max_seq", m.max_seq},
                {"ssm_scale", m.ssm_scale},
                {"visual_mode", to_string(m.visual_mode)},
                {"ablation", to_string(m.ablation)}};
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) {
        // Re-parse with exceptions for the byte-position diagnostic.
        try {
            j = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("config is not valid JSON: ") + e.what());
        }
    }

    if (!j.is_object()) throw ParseError("config root must be a JSON object");
    ExperimentConfig cfg;
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));

    if (j.contains("backbone")) {
        Section s(j.at("backbone"), "backbone");
        s.get("steps", cfg.backbone.steps);
        s.get("lr", cfg.backbone.lr);
        s.get("batch_size", cfg.backbone.batch_size);
        s.reject_unknown();
    }

    {
        if (!j.contains("train")) throw ParseError("missing required field 'train'");
        Section s(j.at("train"), "train");
        s.require("seed", cfg.train.seed);
        s.require("steps", cfg.train.steps);
        s.get("lambda", cfg.train.lambda);
        s.get("lr", cfg.train.lr);
        s.get("batch_size", cfg.train.batch_size);
        s.get("grad_clip", cfg.train.grad_clip);
        s.get("log_every", cfg.train.log_every);
        s.get("pretrain_steps", cfg.pretrain_steps);
        s.get("finetune_steps", cfg.finetune_steps);
        s.get("pretrain_lr", cfg.pretrain_lr);
        s.get("finetune_lr", cfg.finetune_lr);
        s.reject_unknown();
    }

    {
        if (!j.contains("data")) throw ParseError("missing required field 'data'");
        Section s(j.at("data"), "data");
        s.require("seed", cfg.data.seed);
        s.get("size", cfg.data.size);
        s.get("d_raw", cfg.data.d_raw);
        s.get("seq_len", cfg.data.seq_len);
        s.get("vocab", cfg.data.vocab);
        s.get("noise_sigma", cfg.data.noise_sigma);
        s.reject_unknown();
    }

    if (j.contains("eval")) {
        Section s(j.at("eval"), "eval");
        s.get("sigmas", cfg.eval.sigmas);
        s.get("seeds", cfg.eval.seeds);
        s.reject_unknown();
    }

    if (j.contains("paths")) {
        Section s(j.at("paths"), "paths");
        s.get("checkpoint", cfg.paths.checkpoint);
        s.get("report", cfg.paths.report);
        s.get("log", cfg.paths.log);
        s.reject_unknown();
    }

    static const std::set<std::string> known{"model", "backbone", "train",
                                             "data",  "eval",     "paths"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ParseError("unknown field '" + it.key() + "'");
    }

    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw ParseError(e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = model_config_to_json(cfg.model);
    j["backbone"] = {{"steps", cfg.backbone.steps},
                     {"lr", cfg.backbone.lr},
                     {"batch_size", cfg.backbone.batch_size}};
    j["train"] = {{"seed", cfg.train.seed},
                  {"steps", cfg.train.steps},
                  {"lambda", cfg.train.lambda},
                  {"lr", cfg.train.lr},
                  {"batch_size", cfg.train.batch_size},
                  {"grad_clip", cfg.train.grad_clip},
                  {"log_every", cfg.train.log_every},
                  {"pretrain_steps", cfg.pretrain_steps},
                  {"finetune_steps", cfg.finetune_steps},
                  {"pretrain_lr", cfg.pretrain_lr},
                  {"finetune_lr", cfg.finetune_lr}};
    j["data"] = {{"size", cfg.data.size},       {"d_raw", cfg.data.d_raw},
                 {"seq_len", cfg.data.seq_len}, {"vocab", cfg.data.vocab},
                 {"seed", cfg.data.seed},       {"noise_sigma", cfg.data.noise_sigma}};
    j["eval"] = {{"sigmas", cfg.eval.sigmas}, {"seeds", cfg.eval.seeds}};
    j["paths"] = {{"checkpoint", cfg.paths.checkpoint},
                  {"report", cfg.paths.report},
                  {"log", cfg.paths.log}};
    return j;
}

std::string config_hash(const LvlmConfig& cfg) {
    const std::string canon = model_config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> config_diff(const LvlmConfig& a, const LvlmConfig& b) {
    std::vector<std::string> out;
    const json ja = model_config_to_json(a), jb = model_config_to_json(b);
    for (auto it = ja.begin(); it != ja.end(); ++it) {
        const auto& other = jb.at(it.key());
        if (it.value() != other) {
            out.push_back(it.key() + ": " + it.value().dump() + " vs " + other.dump());
        }
    }
    return out;
}

}  // namespace ssmi
