#pragma once

#include <string>
#include <vector>

#include "maskdiff/core.hpp"

namespace maskdiff {

enum class ScheduleKind { log_linear, cosine, cosine_squared, linear };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// alpha(t) = exp(-sigma(t)), strictly decreasing on the clamped domain
// [eps, 1-eps]. All evaluations clamp t first.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::log_linear;
    double sigma_max = 1e8;  // linear only
    double eps = 1e-5;

    double clamp_t(double t) const;
    double sigma(double t) const;
    double sigma_prime(double t) const;
    double alpha(double t) const;
    double alpha_prime(double t) const;
    // alpha'(t)/alpha(t) = -sigma'(t); stable even where alpha underflows.
    double alpha_ratio(double t) const { return -sigma_prime(clamp_t(t)); }

    // gamma = log(1 - alpha(t)); strictly increasing in t.
    double gamma_of_t(double t) const;
    // Inverse of gamma_of_t; throws DomainError outside [gamma(eps), gamma(1-eps)].
    double t_of_gamma(double gamma) const;

    // NELBO loss weight alpha'(t) / (1 - alpha(t)), always negative.
    double loss_weight(double t) const;
};

// alpha_{t(i)} = 1 - (i+1)/(T+1) for i = 0..T; last entry exactly 0.
std::vector<double> discrete_alpha_grid(int T);

}  // namespace maskdiff
