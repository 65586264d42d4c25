#pragma once

#include <string>

#include <json.hpp>

#include "maskdiff/core.hpp"

namespace maskdiff {

inline constexpr int kArtifactVersion = 1;

std::string fnv1a64_hex(const std::string& data);

// Canonical JSON report shared by every CLI command. Timings are excluded
// from the canonical hash so reruns with identical (config, seed) produce an
// identical hash.
struct Report {
    std::string command;
    std::string config_hash;
    uint64_t seed = 0;
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json tables = nlohmann::json::object();
    nlohmann::json timings = nlohmann::json::object();

    nlohmann::json to_json() const;
    void save(const std::string& path) const;
};

// Structural validation against the published schema
// (docs/report.schema.json). Throws on violations.
void validate_report(const nlohmann::json& j);

}  // namespace maskdiff
