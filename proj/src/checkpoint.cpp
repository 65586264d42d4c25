#include "maskdiff/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace maskdiff {

using nlohmann::json;

void save_checkpoint(const std::string& path, const ContextBagModel& model,
                     const NoiseSchedule& sched, uint64_t seed) {
    json j;
    j["format_version"] = 1;
    j["K"] = model.vocab().K;
    j["L"] = model.config().L;
    j["d_emb"] = model.config().d_emb;
    j["d_hidden"] = model.config().d_hidden;
    j["time_conditioning"] = model.config().time_conditioning;
    j["seed"] = seed;
    j["schedule"] = {{"kind", to_string(sched.kind)},
                     {"sigma_max", sched.sigma_max},
                     {"eps", sched.eps}};
    json params = json::object();
    const auto names = model.param_names();
    const auto shapes = model.param_shapes();
    for (size_t i = 0; i < names.size(); ++i) {
        params[names[i]] = {{"shape", shapes[i]}, {"data", model.params()[i]}};
    }
    j["params"] = params;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint: " + path);
    }
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read checkpoint: " + path);
    }
    json j = json::parse(in);
    if (j.at("format_version").get<int>() != 1) {
        throw ConfigError("unsupported checkpoint format version");
    }
    Checkpoint ckpt;
    const int K = j.at("K").get<int>();
    ContextBagModel::Config cfg;
    cfg.L = j.at("L").get<int>();
    cfg.d_emb = j.at("d_emb").get<int>();
    cfg.d_hidden = j.at("d_hidden").get<int>();
    cfg.time_conditioning = j.at("time_conditioning").get<bool>();
    ckpt.model = std::make_unique<ContextBagModel>(
        Vocabulary::with_data_tokens(K - 1), cfg);
    ckpt.seed = j.at("seed").get<uint64_t>();
    const json& sj = j.at("schedule");
    ckpt.schedule.kind = schedule_kind_from_string(sj.at("kind").get<std::string>());
    ckpt.schedule.sigma_max = sj.at("sigma_max").get<double>();
    ckpt.schedule.eps = sj.at("eps").get<double>();

    const auto names = ckpt.model->param_names();
    auto& params = *ckpt.model->mutable_params();
    for (size_t i = 0; i < names.size(); ++i) {
        const json& pj = j.at("params").at(names[i]);
        std::vector<double> data = pj.at("data").get<std::vector<double>>();
        if (data.size() != params[i].size()) {
            throw ShapeError("checkpoint array " + names[i] +
                             " has unexpected size");
        }
        params[i] = std::move(data);
    }
    return ckpt;
}

}  // namespace maskdiff
