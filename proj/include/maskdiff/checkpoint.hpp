#pragma once

#include <memory>
#include <string>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

struct Checkpoint {
    std::unique_ptr<ContextBagModel> model;
    NoiseSchedule schedule;
    uint64_t seed = 0;
};

// Versioned JSON: header with dimensions and schedule config, then named
// flat parameter arrays with explicit shapes.
void save_checkpoint(const std::string& path, const ContextBagModel& model,
                     const NoiseSchedule& sched, uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace maskdiff
