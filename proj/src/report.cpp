#include "maskdiff/report.hpp"

#include <cmath>
#include <fstream>

namespace maskdiff {

using nlohmann::json;

std::string fnv1a64_hex(const std::string& data) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

json Report::to_json() const {
    json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["metrics"] = metrics;
    j["tables"] = tables;
    // Canonical hash over everything except timings; nlohmann orders object
    // keys, so dump() is canonical.
    j["canonical_hash"] = fnv1a64_hex(j.dump());
    j["timings"] = timings;
    validate_report(j);
    return j;
}

void Report::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write report: " + path);
    }
    out << to_json().dump(2) << "\n";
}

namespace {

void check_finite_numbers(const json& j, const std::string& where) {
    if (j.is_number()) {
        const double v = j.get<double>();
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite metric in report: " + where);
        }
        return;
    }
    if (j.is_object() || j.is_array()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            check_finite_numbers(*it, where);
        }
    }
}

}  // namespace

void validate_report(const json& j) {
    const char* required_strings[] = {"command", "config_hash", "canonical_hash"};
    for (const char* key : required_strings) {
        if (!j.contains(key) || !j[key].is_string()) {
            throw ConfigError(std::string("report missing string field: ") + key);
        }
    }
    if (!j.contains("artifact_version") || !j["artifact_version"].is_number_integer()) {
        throw ConfigError("report missing artifact_version");
    }
    if (!j.contains("seed") || !j["seed"].is_number()) {
        throw ConfigError("report missing seed");
    }
    if (!j.contains("metrics") || !j["metrics"].is_object()) {
        throw ConfigError("report missing metrics object");
    }
    if (!j.contains("tables") || !j["tables"].is_object()) {
        throw ConfigError("report missing tables object");
    }
    if (!j.contains("timings") || !j["timings"].is_object()) {
        throw ConfigError("report missing timings object");
    }
    check_finite_numbers(j["metrics"], "metrics");
}

}  // namespace maskdiff
