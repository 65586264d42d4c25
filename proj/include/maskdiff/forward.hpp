#pragma once

#include "maskdiff/core.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Target distribution of the forward interpolation. The masked process uses a
// point mass on the mask token.
struct PriorSpec {
    Simplex pi;

    static PriorSpec masked(const Vocabulary& vocab);
    static PriorSpec uniform(const Vocabulary& vocab);  // over all K categories

    bool is_masked(const Vocabulary& vocab) const;
};

// q(z_t | x) = Cat(alpha_t x + (1 - alpha_t) pi); x must be a data token.
Simplex marginal(Token x, double t, const NoiseSchedule& sched,
                 const PriorSpec& prior, const Vocabulary& vocab);

// q(z_t | z_s) = Cat(alpha_{t|s} z_s + (1 - alpha_{t|s}) pi), s < t.
Simplex transition(Token z_s, double s, double t, const NoiseSchedule& sched,
                   const PriorSpec& prior, const Vocabulary& vocab);

// General interpolating posterior q(z_s | z_t, x), elementwise.
Simplex posterior_general(Token z_t, Token x, double s, double t,
                          const NoiseSchedule& sched, const PriorSpec& prior,
                          const Vocabulary& vocab);

// Masked-prior simplification: copy when z_t is unmasked, otherwise mass
// (1-alpha_s)/(1-alpha_t) on mask and (alpha_s-alpha_t)/(1-alpha_t) on x.
Simplex posterior_masked(Token z_t, Token x, double s, double t,
                         const NoiseSchedule& sched, const Vocabulary& vocab);

// Alpha-level form used by samplers and objectives that walk explicit grids.
Simplex posterior_masked_alpha(Token z_t, Token x, double alpha_s,
                               double alpha_t, const Vocabulary& vocab);

}  // namespace maskdiff
