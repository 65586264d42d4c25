#include "maskdiff/sampler.hpp"

#include <algorithm>

#include "maskdiff/forward.hpp"

namespace maskdiff {

std::vector<Token> reverse_step(const std::vector<Token>& z_t,
                                const DenoiserOutput& xout, double alpha_s,
                                double alpha_t, Rng& rng,
                                const Vocabulary& vocab) {
    std::vector<Token> z_s(z_t);
    for (size_t l = 0; l < z_t.size(); ++l) {
        if (!vocab.is_mask(z_t[l])) {
            continue;
        }
        Simplex p;
        if (alpha_s == alpha_t) {
            p = point_mass(vocab.K, vocab.mask_index);
        } else {
            p.probs.resize(static_cast<size_t>(vocab.K));
            const double denom = 1.0 - alpha_t;
            const double stay = (1.0 - alpha_s) / denom;
            const double move = (alpha_s - alpha_t) / denom;
            for (int k = 0; k < vocab.K; ++k) {
                p.probs[static_cast<size_t>(k)] =
                    move * xout.prob(static_cast<int>(l), k);
            }
            p.probs[static_cast<size_t>(vocab.mask_index)] = stay;
        }
        z_s[l] = sample_categorical(p, rng);
    }
    return z_s;
}

double sampler_alpha(const NoiseSchedule& sched, int i, int T) {
    if (i <= 0) return 1.0;
    if (i >= T) return 0.0;
    return sched.alpha(static_cast<double>(i) / static_cast<double>(T));
}

SampleResult ancestral_sample_from(const Denoiser& den,
                                   const NoiseSchedule& sched, int T,
                                   std::vector<Token> z, Rng& rng, bool cache) {
    if (T < 1) {
        throw InvalidSteps("sampler needs T >= 1");
    }
    if (cache && den.time_conditioned()) {
        throw CacheRequiresTimeFree(
            "caching requires a time-unconditioned denoiser");
    }
    const Vocabulary& vocab = den.vocab();
    SampleResult result;
    result.stats.steps = T;
    result.stats.tokens_unmasked_per_step.reserve(static_cast<size_t>(T));

    DenoiserOutput xout;
    int unmasked_prev = -1;  // force a call on the first step
    for (int i = T; i >= 1; --i) {
        const double t_now = static_cast<double>(i) / static_cast<double>(T);
        const double a_t = sampler_alpha(sched, i, T);
        const double a_s = sampler_alpha(sched, i - 1, T);
        const bool reuse = cache && unmasked_prev == 0;
        if (!reuse) {
            xout = den.predict(z, t_now);
            ++result.stats.denoiser_calls;
        }
        const std::vector<Token> z_next =
            reverse_step(z, xout, a_s, a_t, rng, vocab);
        int unmasked = 0;
        for (size_t l = 0; l < z.size(); ++l) {
            if (vocab.is_mask(z[l]) && !vocab.is_mask(z_next[l])) {
                ++unmasked;
            }
        }
        result.stats.tokens_unmasked_per_step.push_back(unmasked);
        unmasked_prev = unmasked;
        z = z_next;
    }
    if (has_mask(z, vocab)) {
        throw NumericalError("finished sample still contains mask tokens");
    }
    result.tokens = std::move(z);
    return result;
}

SampleResult ancestral_sample(const Denoiser& den, const NoiseSchedule& sched,
                              int T, Rng& rng, bool cache) {
    std::vector<Token> z(static_cast<size_t>(den.seq_len()),
                         den.vocab().mask_index);
    return ancestral_sample_from(den, sched, T, std::move(z), rng, cache);
}

SampleResult semi_ar_generate(const Denoiser& den, const NoiseSchedule& sched,
                              int T, int L_prime, int n_rounds, Rng& rng,
                              bool cache) {
    const int L = den.seq_len();
    if (L_prime <= 0 || L_prime >= L) {
        throw BlockSizeError("semi-AR needs 0 < L' < L");
    }
    if (n_rounds < 0) {
        throw BlockSizeError("negative round count");
    }
    const Vocabulary& vocab = den.vocab();

    SampleResult first = ancestral_sample(den, sched, T, rng, cache);
    SampleResult out;
    out.tokens = first.tokens;
    out.stats = first.stats;

    const int prefix_len = L - L_prime;
    for (int round = 0; round < n_rounds; ++round) {
        std::vector<Token> z(static_cast<size_t>(L), vocab.mask_index);
        // Last prefix_len generated tokens become the next round's prefix.
        std::copy(out.tokens.end() - prefix_len, out.tokens.end(), z.begin());
        SampleResult r =
            ancestral_sample_from(den, sched, T, std::move(z), rng, cache);
        for (int l = 0; l < prefix_len; ++l) {
            if (r.tokens[static_cast<size_t>(l)] !=
                *(out.tokens.end() - prefix_len + l)) {
                throw NumericalError("semi-AR prefix was not preserved");
            }
        }
        out.tokens.insert(out.tokens.end(), r.tokens.begin() + prefix_len,
                          r.tokens.end());
        out.stats.denoiser_calls += r.stats.denoiser_calls;
        out.stats.steps += r.stats.steps;
        out.stats.tokens_unmasked_per_step.insert(
            out.stats.tokens_unmasked_per_step.end(),
            r.stats.tokens_unmasked_per_step.begin(),
            r.stats.tokens_unmasked_per_step.end());
    }
    return out;
}

}  // namespace maskdiff
