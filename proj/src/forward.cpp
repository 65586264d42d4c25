#include "maskdiff/forward.hpp"

#include <cmath>

namespace maskdiff {

namespace {
constexpr double kUnreachableDenominator = 1e-300;
}

PriorSpec PriorSpec::masked(const Vocabulary& vocab) {
    PriorSpec p;
    p.pi = point_mass(vocab.K, vocab.mask_index);
    return p;
}

PriorSpec PriorSpec::uniform(const Vocabulary& vocab) {
    PriorSpec p;
    p.pi.probs.assign(static_cast<size_t>(vocab.K), 1.0 / vocab.K);
    return p;
}

bool PriorSpec::is_masked(const Vocabulary& vocab) const {
    return pi.probs[static_cast<size_t>(vocab.mask_index)] == 1.0;
}

Simplex marginal(Token x, double t, const NoiseSchedule& sched,
                 const PriorSpec& prior, const Vocabulary& vocab) {
    if (vocab.is_mask(x)) {
        throw DataContainsMask("marginal conditioned on the mask token");
    }
    prior.pi.validate();
    const double a = sched.alpha(t);
    Simplex out;
    out.probs.assign(static_cast<size_t>(vocab.K), 0.0);
    for (int k = 0; k < vocab.K; ++k) {
        out.probs[static_cast<size_t>(k)] = (1.0 - a) * prior.pi[k];
    }
    out.probs[static_cast<size_t>(x)] += a;
    return out;
}

Simplex transition(Token z_s, double s, double t, const NoiseSchedule& sched,
                   const PriorSpec& prior, const Vocabulary& vocab) {
    if (s >= t) {
        throw TimeOrderError("transition requires s < t");
    }
    const double a_ts = sched.alpha(t) / sched.alpha(s);
    Simplex out;
    out.probs.assign(static_cast<size_t>(vocab.K), 0.0);
    for (int k = 0; k < vocab.K; ++k) {
        out.probs[static_cast<size_t>(k)] = (1.0 - a_ts) * prior.pi[k];
    }
    out.probs[static_cast<size_t>(z_s)] += a_ts;
    return out;
}

Simplex posterior_general(Token z_t, Token x, double s, double t,
                          const NoiseSchedule& sched, const PriorSpec& prior,
                          const Vocabulary& vocab) {
    if (s >= t) {
        throw TimeOrderError("posterior requires s < t");
    }
    const double a_s = sched.alpha(s);
    const double a_t = sched.alpha(t);
    const double a_ts = a_t / a_s;
    const double pi_zt = prior.pi[z_t];
    const double denom =
        a_t * (z_t == x ? 1.0 : 0.0) + (1.0 - a_t) * pi_zt;
    if (denom < kUnreachableDenominator) {
        throw UnreachableLatent("z_t has zero probability under q(z_t | x)");
    }
    Simplex out;
    out.probs.assign(static_cast<size_t>(vocab.K), 0.0);
    for (int k = 0; k < vocab.K; ++k) {
        const double left =
            a_ts * (k == z_t ? 1.0 : 0.0) + (1.0 - a_ts) * pi_zt;
        const double right =
            a_s * (k == x ? 1.0 : 0.0) + (1.0 - a_s) * prior.pi[k];
        out.probs[static_cast<size_t>(k)] = left * right / denom;
    }
    return out;
}

Simplex posterior_masked_alpha(Token z_t, Token x, double alpha_s,
                               double alpha_t, const Vocabulary& vocab) {
    if (vocab.is_mask(x)) {
        throw DataContainsMask("posterior conditioned on mask data token");
    }
    if (!vocab.is_mask(z_t)) {
        return point_mass(vocab.K, z_t);
    }
    const double denom = 1.0 - alpha_t;
    if (denom < kUnreachableDenominator) {
        throw UnreachableLatent("masked latent has zero forward probability");
    }
    Simplex out;
    out.probs.assign(static_cast<size_t>(vocab.K), 0.0);
    out.probs[static_cast<size_t>(vocab.mask_index)] = (1.0 - alpha_s) / denom;
    out.probs[static_cast<size_t>(x)] += (alpha_s - alpha_t) / denom;
    return out;
}

Simplex posterior_masked(Token z_t, Token x, double s, double t,
                         const NoiseSchedule& sched, const Vocabulary& vocab) {
    if (s >= t) {
        throw TimeOrderError("posterior requires s < t");
    }
    return posterior_masked_alpha(z_t, x, sched.alpha(s), sched.alpha(t), vocab);
}

}  // namespace maskdiff
