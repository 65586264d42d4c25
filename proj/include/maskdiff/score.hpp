#pragma once

#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Entry (y', y) holds the instantaneous rate of the transition y -> y'.
// Columns sum to zero.
struct RateMatrix {
    int K = 0;
    std::vector<double> r;  // row-major, (y' * K + y)

    double at(int y_prime, int y) const {
        return r[static_cast<size_t>(y_prime) * K + static_cast<size_t>(y)];
    }
    double column_sum(int y) const;
};

// Forward rate R_t = (alpha'_t / alpha_t) (I - m 1^T).
RateMatrix forward_rate(double t, const NoiseSchedule& sched, int K);

// s_theta(z_t)_y, the approximate concrete score under SUBS.
struct ConcreteScore {
    std::vector<double> s;

    double operator[](int y) const { return s[static_cast<size_t>(y)]; }
};

ConcreteScore concrete_score(Token z_t, const DenoiserOutput& xout, int pos,
                             double alpha_t, const Vocabulary& vocab);

// Reverse rate for the transition y -> y'; nonzero only out of the mask.
double reverse_rate(Token y_prime, Token y, const DenoiserOutput& xout, int pos,
                    double t, const NoiseSchedule& sched,
                    const Vocabulary& vocab);

// Score-entropy NELBO integrand at latent y for data token x, with
// K(a) = a log a - a and K(0) = 0 by continuity. q_t is the masked forward
// marginal of x.
double sedd_nelbo_integrand(Token y, Token x, const ConcreteScore& score,
                            double t, const NoiseSchedule& sched,
                            const Vocabulary& vocab);

// Simplified integrand (alpha'_t / (1 - alpha_t)) log<x_theta, x> <y, m>.
double mdlm_integrand(Token y, Token x, const DenoiserOutput& xout, int pos,
                      double t, const NoiseSchedule& sched,
                      const Vocabulary& vocab);

struct EquivalenceCase {
    double t = 0.0;
    Token y = 0;
    Token x = 0;
    double sedd = 0.0;
    double mdlm = 0.0;
    double deviation = 0.0;
    double rate_deviation = 0.0;
};

struct EquivalenceReport {
    double max_abs_deviation = 0.0;
    double max_rate_deviation = 0.0;
    std::vector<EquivalenceCase> cases;
};

// Numerical witness that the score-entropy NELBO collapses to the simplified
// integrand under SUBS, and that the reverse rate factors through
// score * forward rate.
EquivalenceReport equivalence_report(const Denoiser& den,
                                     const NoiseSchedule& sched, int n_cases,
                                     Rng& rng);

}  // namespace maskdiff
