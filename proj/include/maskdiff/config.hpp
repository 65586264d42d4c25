#pragma once

#include <string>

#include "maskdiff/objectives.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Flat-sectioned plain-text configuration. Unknown sections or keys are
// rejected; seeds are always explicit.
struct RunConfig {
    // [model]
    int model_L = 8;
    int model_d_emb = 32;
    int model_d_hidden = 64;
    bool model_time_conditioning = false;
    int model_k_data = 4;

    // [schedule]
    NoiseSchedule schedule;

    // [objective]
    ObjectiveVariant objective;

    // [train]
    long train_steps = 1000;
    int train_batch_size = 32;
    double train_lr = 3e-4;
    long train_warmup_steps = 100;
    uint64_t train_seed = 1;
    bool train_seed_explicit = false;  // seeds must be spelled out to train
    long train_log_every = 50;

    // [eval]
    std::string eval_estimator = "mc";  // mc | quadrature
    long eval_n_samples = 16;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_string(const std::string& text);
    std::string serialize() const;

    ContextBagModel::Config model_config() const;
    TrainConfig train_config() const;
    void validate() const;
};

}  // namespace maskdiff
