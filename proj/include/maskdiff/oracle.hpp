#pragma once

#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

// Tiny-instance guard shared by the exact dynamic programs.
void check_tiny_instance(const Vocabulary& vocab, int L, int T);

struct ChainStep {
    double alpha_t = 0.0;  // current (noisier) level
    double alpha_s = 0.0;  // next (cleaner) level
    double t_input = 0.0;  // time fed to the denoiser
};

// Exact distribution over the K^L joint latent states after walking the
// given reverse steps from the all-mask state. The final step must reach
// alpha_s = 1 so the result is supported on mask-free sequences; the
// returned vector is indexed over the n_data^L data sequences.
std::vector<double> reverse_chain_distribution(const Denoiser& den,
                                               const std::vector<ChainStep>& steps,
                                               int L);

// Steps of the discrete-time generative model: the alpha grid
// 1 - (i+1)/(T+1) followed by the reconstruction kernel at t(0).
std::vector<ChainStep> nelbo_chain_steps(int T);

// Steps walked by ancestral_sample at the same T (uniform grid with exact
// endpoints).
std::vector<ChainStep> sampler_chain_steps(const NoiseSchedule& sched, int T);

// -log p_theta(x) of the T-step reverse model, exactly.
double exact_model_nll(const std::vector<Token>& x, const Denoiser& den, int T);

// Output distribution of ancestral_sample(den, sched, T), exactly.
std::vector<double> sampler_distribution(const Denoiser& den,
                                         const NoiseSchedule& sched, int T);

struct BoundGapRow {
    int T = 0;
    double nelbo = 0.0;
    double nll = 0.0;
    double gap = 0.0;
};

// Exhaustive discrete NELBO vs exact DP NLL at the same T. Throws
// NumericalError if any gap falls below -1e-9: the variational bound is the
// flagship correctness property.
std::vector<BoundGapRow> bound_gap_report(const std::vector<Token>& x,
                                          const Denoiser& den,
                                          const std::vector<int>& T_list);

double entropy_rate(const DataDistribution& dist);

}  // namespace maskdiff
