#include "ssmi/checkpoint.hpp"

#include <map>

#include "ssmi/container.hpp"

namespace ssmi {

void save_checkpoint(const LvlmModel& model, const CheckpointMeta& meta, const std::string& path) {
    Container c;
    nlohmann::json j;
    j["kind"] = "ssmi-checkpoint";
    j["stage"] = meta.stage;
    j["step"] = meta.step;
    j["seed"] = meta.seed;
    j["config_hash"] = config_hash(model.config());
    j["config"] = meta.config;
    j["overrides"] = meta.overrides;
    c.meta_json = j.dump();

    for (const auto& nt : model.named_tensors()) {
        c.tensors.push_back({nt.name, nt.t->shape, nt.t->data});
    }
    write_container(path, c);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Container c = read_container(path);
    nlohmann::json j = nlohmann::json::parse(c.meta_json, nullptr, false);
    if (j.is_discarded() || j.value("kind", "") != "ssmi-checkpoint") {
        throw FormatError(12, "metadata is not an ssmi-checkpoint record");
    }

    LoadedCheckpoint out;
    out.meta.stage = j.value("stage", "none");
    out.meta.step = j.value("step", std::size_t{0});
    out.meta.seed = j.value("seed", std::uint64_t{0});
    out.meta.hash = j.value("config_hash", "");
    out.meta.config = j.at("config");
    out.meta.overrides = j.value("overrides", nlohmann::json::object());

    try {
        out.config = parse_config(out.meta.config.dump());
    } catch (const ParseError& e) {
        throw FormatError(12, std::string("embedded config invalid: ") + e.what());
    }
    if (out.meta.hash != config_hash(out.config.model)) {
        throw FormatError(12, "config_hash does not match embedded model config");
    }

    out.model = std::make_unique<LvlmModel>(out.config.model, out.meta.seed);
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& t : c.tensors) by_name[t.name] = &t;
    auto named = out.model->named_tensors();
    if (by_name.size() != named.size()) {
        throw FormatError(12, "checkpoint holds " + std::to_string(by_name.size()) +
                                  " tensors, model needs " + std::to_string(named.size()));
    }
    for (auto& nt : named) {
        auto it = by_name.find(nt.name);
        if (it == by_name.end()) throw FormatError(12, "missing tensor '" + nt.name + "'");
        if (it->second->shape != nt.t->shape) {
            throw FormatError(12, "tensor '" + nt.name + "' has shape " +
                                      shape_str(it->second->shape) + ", expected " +
                                      shape_str(nt.t->shape));
        }
        nt.t->data = it->second->data;
    }

    if (out.meta.stage == "pretrain") out.model->set_freeze_mode(FreezeMode::pretrain_ssm);
    else if (out.meta.stage == "finetune") out.model->set_freeze_mode(FreezeMode::finetune_ssm);
    else out.model->set_freeze_mode(FreezeMode::frozen);
    return out;
}

}  // namespace ssmi
