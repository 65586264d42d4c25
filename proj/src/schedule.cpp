#include "maskdiff/schedule.hpp"

#include <cmath>

namespace maskdiff {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "log_linear") return ScheduleKind::log_linear;
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "cosine_squared") return ScheduleKind::cosine_squared;
    if (s == "linear") return ScheduleKind::linear;
    throw ConfigError("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::log_linear: return "log_linear";
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::cosine_squared: return "cosine_squared";
        case ScheduleKind::linear: return "linear";
    }
    return "?";
}

double NoiseSchedule::clamp_t(double t) const {
    if (t < eps) return eps;
    if (t > 1.0 - eps) return 1.0 - eps;
    return t;
}

double NoiseSchedule::sigma(double t) const {
    t = clamp_t(t);
    switch (kind) {
        case ScheduleKind::log_linear:
            return -std::log1p(-t);
        case ScheduleKind::cosine:
            return -std::log(std::cos(0.5 * kPi * t));
        case ScheduleKind::cosine_squared:
            return -2.0 * std::log(std::cos(0.5 * kPi * t));
        case ScheduleKind::linear:
            return sigma_max * t;
    }
    return 0.0;
}

double NoiseSchedule::sigma_prime(double t) const {
    t = clamp_t(t);
    switch (kind) {
        case ScheduleKind::log_linear:
            return 1.0 / (1.0 - t);
        case ScheduleKind::cosine:
            return 0.5 * kPi * std::tan(0.5 * kPi * t);
        case ScheduleKind::cosine_squared:
            return kPi * std::tan(0.5 * kPi * t);
        case ScheduleKind::linear:
            return sigma_max;
    }
    return 0.0;
}

double NoiseSchedule::alpha(double t) const {
    t = clamp_t(t);
    // Evaluated per kind rather than through exp(-sigma) where a closed form
    // avoids needless rounding.
    switch (kind) {
        case ScheduleKind::log_linear:
            return 1.0 - t;
        case ScheduleKind::cosine:
            return std::cos(0.5 * kPi * t);
        case ScheduleKind::cosine_squared: {
            const double c = std::cos(0.5 * kPi * t);
            return c * c;
        }
        case ScheduleKind::linear:
            return std::exp(-sigma_max * t);
    }
    return 0.0;
}

double NoiseSchedule::alpha_prime(double t) const {
    t = clamp_t(t);
    switch (kind) {
        case ScheduleKind::log_linear:
            return -1.0;
        case ScheduleKind::cosine:
            return -0.5 * kPi * std::sin(0.5 * kPi * t);
        case ScheduleKind::cosine_squared:
            return -0.5 * kPi * std::sin(kPi * t);
        case ScheduleKind::linear:
            return -sigma_max * std::exp(-sigma_max * t);
    }
    return 0.0;
}

double NoiseSchedule::gamma_of_t(double t) const {
    t = clamp_t(t);
    if (kind == ScheduleKind::log_linear) {
        return std::log(t);  // 1 - alpha_t = t exactly
    }
    // 1 - alpha = -expm1(-sigma), accurate for small sigma.
    return std::log(-std::expm1(-sigma(t)));
}

double NoiseSchedule::t_of_gamma(double gamma) const {
    const double lo = gamma_of_t(eps);
    const double hi = gamma_of_t(1.0 - eps);
    const double slack = 1e-9;
    if (gamma < lo - slack || gamma > hi + slack) {
        throw DomainError("gamma outside the clamped schedule range");
    }
    if (gamma < lo) gamma = lo;
    if (gamma > hi) gamma = hi;

    const double a = -std::expm1(gamma);  // alpha at this gamma
    double t = 0.0;
    switch (kind) {
        case ScheduleKind::log_linear:
            t = std::exp(gamma);
            break;
        case ScheduleKind::cosine:
            t = (2.0 / kPi) * std::acos(a);
            break;
        case ScheduleKind::cosine_squared:
            t = (2.0 / kPi) * std::acos(std::sqrt(a));
            break;
        case ScheduleKind::linear:
            t = -std::log(a) / sigma_max;
            break;
    }
    return clamp_t(t);
}

double NoiseSchedule::loss_weight(double t) const {
    t = clamp_t(t);
    const double one_minus_alpha = -std::expm1(-sigma(t));
    return alpha_prime(t) / one_minus_alpha;
}

std::vector<double> discrete_alpha_grid(int T) {
    if (T < 1) {
        throw InvalidSteps("discrete grid needs T >= 1");
    }
    std::vector<double> grid(static_cast<size_t>(T) + 1);
    for (int i = 0; i <= T; ++i) {
        grid[static_cast<size_t>(i)] =
            static_cast<double>(T - i) / static_cast<double>(T + 1);
    }
    return grid;
}

}  // namespace maskdiff
