#include "maskdiff/config.hpp"

#include <fstream>
#include <sstream>

namespace maskdiff {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) {
        return "";
    }
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("boolean expected for " + key + ", got '" + v + "'");
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config file: " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section != "model" && section != "schedule" &&
                section != "objective" && section != "train" &&
                section != "eval") {
                throw ConfigError("unknown config section [" + section + "]");
            }
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const std::string full = section + "." + key;
        try {
            if (full == "model.L") cfg.model_L = std::stoi(value);
            else if (full == "model.d_emb") cfg.model_d_emb = std::stoi(value);
            else if (full == "model.d_hidden") cfg.model_d_hidden = std::stoi(value);
            else if (full == "model.time_conditioning")
                cfg.model_time_conditioning = parse_bool(value, full);
            else if (full == "model.k_data") cfg.model_k_data = std::stoi(value);
            else if (full == "schedule.kind")
                cfg.schedule.kind = schedule_kind_from_string(value);
            else if (full == "schedule.sigma_max")
                cfg.schedule.sigma_max = std::stod(value);
            else if (full == "schedule.eps") cfg.schedule.eps = std::stod(value);
            else if (full == "objective.kind")
                cfg.objective.kind = objective_kind_from_string(value);
            else if (full == "objective.T") cfg.objective.T = std::stoi(value);
            else if (full == "train.steps") cfg.train_steps = std::stol(value);
            else if (full == "train.batch_size")
                cfg.train_batch_size = std::stoi(value);
            else if (full == "train.lr") cfg.train_lr = std::stod(value);
            else if (full == "train.warmup_steps")
                cfg.train_warmup_steps = std::stol(value);
            else if (full == "train.seed") {
                cfg.train_seed = std::stoull(value);
                cfg.train_seed_explicit = true;
            }
            else if (full == "train.log_every")
                cfg.train_log_every = std::stol(value);
            else if (full == "eval.estimator") {
                if (value != "mc" && value != "quadrature") {
                    throw ConfigError("eval.estimator must be mc or quadrature");
                }
                cfg.eval_estimator = value;
            } else if (full == "eval.n_samples")
                cfg.eval_n_samples = std::stol(value);
            else
                throw ConfigError("unknown config key " + full);
        } catch (const std::invalid_argument&) {
            throw ConfigError("cannot parse value for " + full + ": '" + value + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("value out of range for " + full + ": '" + value + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::string RunConfig::serialize() const {
    std::ostringstream out;
    out << "[model]\n";
    out << "L = " << model_L << "\n";
    out << "d_emb = " << model_d_emb << "\n";
    out << "d_hidden = " << model_d_hidden << "\n";
    out << "time_conditioning = " << (model_time_conditioning ? "true" : "false")
        << "\n";
    out << "k_data = " << model_k_data << "\n";
    out << "\n[schedule]\n";
    out << "kind = " << to_string(schedule.kind) << "\n";
    out.precision(17);
    out << "sigma_max = " << schedule.sigma_max << "\n";
    out << "eps = " << schedule.eps << "\n";
    out << "\n[objective]\n";
    out << "kind = " << to_string(objective.kind) << "\n";
    out << "T = " << objective.T << "\n";
    out << "\n[train]\n";
    out << "steps = " << train_steps << "\n";
    out << "batch_size = " << train_batch_size << "\n";
    out << "lr = " << train_lr << "\n";
    out << "warmup_steps = " << train_warmup_steps << "\n";
    out << "seed = " << train_seed << "\n";
    out << "log_every = " << train_log_every << "\n";
    out << "\n[eval]\n";
    out << "estimator = " << eval_estimator << "\n";
    out << "n_samples = " << eval_n_samples << "\n";
    return out.str();
}

ContextBagModel::Config RunConfig::model_config() const {
    ContextBagModel::Config c;
    c.L = model_L;
    c.d_emb = model_d_emb;
    c.d_hidden = model_d_hidden;
    c.time_conditioning = model_time_conditioning;
    return c;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.steps = train_steps;
    t.batch_size = train_batch_size;
    t.lr = train_lr;
    t.warmup_steps = train_warmup_steps;
    t.seed = train_seed;
    t.log_every = train_log_every;
    t.objective = objective;
    return t;
}

void RunConfig::validate() const {
    if (model_L < 1 || model_k_data < 1) {
        throw ConfigError("model.L and model.k_data must be positive");
    }
    if (schedule.eps <= 0.0 || schedule.eps >= 0.5) {
        throw ConfigError("schedule.eps must lie in (0, 0.5)");
    }
    if (schedule.kind == ScheduleKind::linear && schedule.sigma_max <= 0.0) {
        throw ConfigError("schedule.sigma_max must be positive");
    }
    if (objective.kind != ObjectiveKind::continuous) {
        objective.validate();
    }
    if (train_batch_size < 1 || train_steps < 0) {
        throw ConfigError("invalid train section");
    }
    if (eval_n_samples < 1) {
        throw ConfigError("eval.n_samples must be >= 1");
    }
}

}  // namespace maskdiff
