#pragma once

#include <functional>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/schedule.hpp"

namespace maskdiff {

enum class ObjectiveKind { d3pm_full, rb2, rb2_rb1_discrete, continuous };

ObjectiveKind objective_kind_from_string(const std::string& s);
std::string to_string(ObjectiveKind k);

struct ObjectiveVariant {
    ObjectiveKind kind = ObjectiveKind::continuous;
    int T = 0;  // discrete kinds only, >= 1

    void validate() const;
};

struct NelboEstimate {
    double value = 0.0;               // nats per sequence
    double per_datapoint_variance = 0.0;
    long n_samples = 0;
};

// Unsimplified two-term KL bracket for one position; nonzero only when
// z_t is the mask. `xout` may carry mass on the mask token (the
// mask-unconstrained wiring); with a SUBS output the second term vanishes
// and the expression collapses to the simplified form.
double kl_term_unsimplified(const DenoiserOutput& xout, int pos, Token x,
                            Token z_t, double alpha_s, double alpha_t,
                            const Vocabulary& vocab);

// Reconstruction term: z_{t(0)} ~ Cat(T/(T+1) x + 1/(T+1) m), value
// -sum_l log<x_theta^l(z_{t(0)}), x^l>.
double reconstruction_loss_exhaustive(const std::vector<Token>& x,
                                      const Denoiser& den, int T);
double reconstruction_loss_mc(const std::vector<Token>& x, const Denoiser& den,
                              int T, Rng& rng);
// Continuous-time reconstruction loss is exactly zero, as is the prior term.
double reconstruction_loss_continuous();
double prior_loss();

// Discrete NELBO (diffusion + reconstruction terms; the prior term is 0).
// Exhaustive mode sums over every step index and every reachable mask
// pattern; guarded to K^L <= 4096 and T <= 1024.
double diffusion_loss_discrete_exhaustive(const ObjectiveVariant& variant,
                                          const std::vector<Token>& x,
                                          const Denoiser& den);
// One-sample Monte Carlo estimate: i ~ U{1..T}, z_t ~ q(z_{t(i)} | x),
// T * (per-variant term) + sampled reconstruction term.
double diffusion_loss_discrete_mc(const ObjectiveVariant& variant,
                                  const std::vector<Token>& x,
                                  const Denoiser& den, Rng& rng);

// Exact expectation of sum_l -log<x_theta^l, x^l> over the 2^L mask
// patterns at a fixed masking probability.
double expected_masked_nll(const std::vector<Token>& x, const Denoiser& den,
                           double mask_prob, double t_input);

// Per-pattern nll table for repeated expectation sweeps over the same
// datapoint (time-free denoisers: the table does not depend on t_input).
std::vector<double> masked_nll_by_pattern(const std::vector<Token>& x,
                                          const Denoiser& den, double t_input);
double expected_masked_nll_from_table(const std::vector<double>& table, int L,
                                      double mask_prob);

// Patterns with equal mask counts share the binomial weight; grouping the
// table by popcount turns each expectation into an O(L) evaluation.
std::vector<double> group_nll_table_by_mask_count(
    const std::vector<double>& table, int L);
double expected_masked_nll_from_grouped(const std::vector<double>& grouped,
                                        double mask_prob);

// Exact discrete NELBO (diffusion + reconstruction) for a time-free SUBS
// denoiser, evaluated from a grouped pattern table: every step index and
// every mask pattern integrated out, no Monte Carlo noise.
double discrete_nelbo_from_grouped(const std::vector<double>& grouped, int T);

// Integrand of the continuous NELBO at time t with the mask pattern
// integrated out exactly: -w(t) E[nll], nonnegative.
double nelbo_time_integrand(const std::vector<Token>& x, const Denoiser& den,
                            const NoiseSchedule& sched, double t);

// Continuous NELBO by 64-node Gauss-Legendre quadrature in gamma space with
// the exact expectation over mask patterns at each node (2^L patterns).
NelboEstimate nelbo_continuous_quadrature(const std::vector<Token>& x,
                                          const Denoiser& den,
                                          const NoiseSchedule& sched,
                                          int n_nodes = 64);

enum class TimeSampler { iid, low_discrepancy };

// n one-sample estimates of the continuous NELBO: one t and one z_t each,
// integrand weight alpha'_t / (1 - alpha_t).
NelboEstimate nelbo_continuous_mc(const std::vector<Token>& x,
                                  const Denoiser& den,
                                  const NoiseSchedule& sched, int n, Rng& rng,
                                  TimeSampler sampler = TimeSampler::low_discrepancy);

// Stratified times t_i ~ U[(i-1)/N, i/N), shuffled before assignment.
std::vector<double> low_discrepancy_times(int N, Rng& rng);

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>* nodes, std::vector<double>* weights);

struct TrainConfig {
    long steps = 1000;
    int batch_size = 32;
    double lr = 3e-4;
    long warmup_steps = 100;
    uint64_t seed = 0;
    long log_every = 50;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    ObjectiveVariant objective;  // continuous or rb2_rb1_discrete
};

struct TrainResult {
    std::vector<std::pair<long, double>> loss_trace;  // (step, nats per token)
    double final_loss = 0.0;
};

// Algorithm: sample batch, stratified times, mask per the forward marginal,
// NELBO loss + hand gradients, Adam with linear warmup from zero.
TrainResult train(ContextBagModel& model,
                  const std::vector<std::vector<Token>>& corpus,
                  const TrainConfig& cfg, const NoiseSchedule& sched,
                  const std::function<void(long, double)>& log_hook = nullptr);

}  // namespace maskdiff
