#pragma once

#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

struct SamplerStats {
    long denoiser_calls = 0;
    long steps = 0;
    std::vector<int> tokens_unmasked_per_step;
};

struct SampleResult {
    std::vector<Token> tokens;
    SamplerStats stats;
};

// One reverse transition. Unmasked positions are copied; each currently
// masked position consumes exactly one categorical draw, in ascending
// position order. That draw discipline couples cached and uncached
// trajectories bit for bit.
std::vector<Token> reverse_step(const std::vector<Token>& z_t,
                                const DenoiserOutput& xout, double alpha_s,
                                double alpha_t, Rng& rng,
                                const Vocabulary& vocab);

// Alpha value walked by the T-step sampler at time i/T. Interior points come
// from the schedule; the endpoints are pinned to alpha=1 (clean) and alpha=0
// (all-mask) so the final step always unmasks everything.
double sampler_alpha(const NoiseSchedule& sched, int i, int T);

// Ancestral generation from the all-mask sequence down the T-step grid.
// With cache=true (time-unconditioned denoisers only) the previous
// DenoiserOutput is reused whenever the preceding step unmasked nothing.
SampleResult ancestral_sample(const Denoiser& den, const NoiseSchedule& sched,
                              int T, Rng& rng, bool cache);

// Same walk from a caller-supplied initial latent (used by semi-AR rounds).
SampleResult ancestral_sample_from(const Denoiser& den,
                                   const NoiseSchedule& sched, int T,
                                   std::vector<Token> z, Rng& rng, bool cache);

// Block-wise generation: each round after the first keeps the last
// L - L_prime tokens as an unmasked prefix and samples L_prime fresh ones.
// Output length is L + n_rounds * L_prime.
SampleResult semi_ar_generate(const Denoiser& den, const NoiseSchedule& sched,
                              int T, int L_prime, int n_rounds, Rng& rng,
                              bool cache);

}  // namespace maskdiff
