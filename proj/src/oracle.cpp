#include "maskdiff/oracle.hpp"

#include <cmath>
#include <unordered_map>

#include "maskdiff/objectives.hpp"
#include "maskdiff/sampler.hpp"

namespace maskdiff {

namespace {

size_t pow_checked(int base, int exp, size_t limit) {
    size_t n = 1;
    for (int i = 0; i < exp; ++i) {
        n *= static_cast<size_t>(base);
        if (n > limit) {
            throw TooLarge("state space exceeds the tiny-instance guard");
        }
    }
    return n;
}

std::vector<Token> state_to_seq(size_t idx, int K, int L) {
    std::vector<Token> seq(static_cast<size_t>(L));
    for (int l = L - 1; l >= 0; --l) {
        seq[static_cast<size_t>(l)] = static_cast<Token>(idx % static_cast<size_t>(K));
        idx /= static_cast<size_t>(K);
    }
    return seq;
}

size_t seq_to_state(const std::vector<Token>& seq, int K) {
    size_t idx = 0;
    for (Token t : seq) {
        idx = idx * static_cast<size_t>(K) + static_cast<size_t>(t);
    }
    return idx;
}

// Spread `mass` from latent state `z` across its successors under the
// factorized reverse kernel, recursing over masked positions.
void expand_state(const std::vector<Token>& z, const DenoiserOutput& xout,
                  double alpha_s, double alpha_t, double mass,
                  const Vocabulary& vocab, std::vector<Token>& scratch,
                  size_t pos, std::vector<double>& next) {
    if (pos == z.size()) {
        next[seq_to_state(scratch, vocab.K)] += mass;
        return;
    }
    const Token zl = z[pos];
    if (!vocab.is_mask(zl)) {
        scratch[pos] = zl;
        expand_state(z, xout, alpha_s, alpha_t, mass, vocab, scratch, pos + 1,
                     next);
        return;
    }
    const double denom = 1.0 - alpha_t;
    const double stay = (1.0 - alpha_s) / denom;
    const double move = (alpha_s - alpha_t) / denom;
    if (stay > 0.0) {
        scratch[pos] = vocab.mask_index;
        expand_state(z, xout, alpha_s, alpha_t, mass * stay, vocab, scratch,
                     pos + 1, next);
    }
    if (move > 0.0) {
        for (int y = 0; y < vocab.n_data(); ++y) {
            const double p = xout.prob(static_cast<int>(pos), y);
            if (p == 0.0) {
                continue;
            }
            scratch[pos] = static_cast<Token>(y);
            expand_state(z, xout, alpha_s, alpha_t, mass * move * p, vocab,
                         scratch, pos + 1, next);
        }
    }
}

}  // namespace

void check_tiny_instance(const Vocabulary& vocab, int L, int T) {
    if (vocab.K > 6 || L > 4 || T > 64) {
        throw TooLarge("instance exceeds the K<=6, L<=4, T<=64 oracle guard");
    }
    const size_t states = pow_checked(vocab.K, L, 1000000);
    if (states * static_cast<size_t>(T + 1) > 1000000) {
        throw TooLarge("K^L * (T+1) exceeds the oracle guard");
    }
}

std::vector<ChainStep> nelbo_chain_steps(int T) {
    const std::vector<double> grid = discrete_alpha_grid(T);
    std::vector<ChainStep> steps;
    steps.reserve(static_cast<size_t>(T) + 1);
    for (int i = T; i >= 1; --i) {
        steps.push_back(ChainStep{grid[static_cast<size_t>(i)],
                                  grid[static_cast<size_t>(i) - 1],
                                  static_cast<double>(i) / T});
    }
    // Reconstruction kernel at t(0): masked positions draw from the
    // denoiser, unmasked positions are copied.
    steps.push_back(ChainStep{grid[0], 1.0, 0.0});
    return steps;
}

std::vector<ChainStep> sampler_chain_steps(const NoiseSchedule& sched, int T) {
    std::vector<ChainStep> steps;
    steps.reserve(static_cast<size_t>(T));
    for (int i = T; i >= 1; --i) {
        steps.push_back(ChainStep{sampler_alpha(sched, i, T),
                                  sampler_alpha(sched, i - 1, T),
                                  static_cast<double>(i) / T});
    }
    return steps;
}

std::vector<double> reverse_chain_distribution(const Denoiser& den,
                                               const std::vector<ChainStep>& steps,
                                               int L) {
    const Vocabulary& vocab = den.vocab();
    check_tiny_instance(vocab, L, static_cast<int>(steps.size()) - 1);
    const size_t n_states = pow_checked(vocab.K, L, 1000000);

    std::vector<double> dist(n_states, 0.0);
    std::vector<Token> all_mask(static_cast<size_t>(L), vocab.mask_index);
    dist[seq_to_state(all_mask, vocab.K)] = 1.0;

    const bool time_free = !den.time_conditioned();
    std::unordered_map<size_t, DenoiserOutput> memo;

    std::vector<double> next(n_states, 0.0);
    std::vector<Token> scratch(static_cast<size_t>(L));
    for (const ChainStep& step : steps) {
        std::fill(next.begin(), next.end(), 0.0);
        if (!time_free) {
            memo.clear();
        }
        for (size_t s = 0; s < n_states; ++s) {
            const double mass = dist[s];
            if (mass == 0.0) {
                continue;
            }
            const std::vector<Token> z = state_to_seq(s, vocab.K, L);
            auto it = memo.find(s);
            if (it == memo.end()) {
                it = memo.emplace(s, den.predict(z, step.t_input)).first;
            }
            expand_state(z, it->second, step.alpha_s, step.alpha_t, mass, vocab,
                         scratch, 0, next);
        }
        dist.swap(next);
    }

    // Collapse onto data sequences; the final step reached alpha_s = 1, so
    // any residual mass on masked states signals a broken chain.
    const size_t n_data_seqs = pow_checked(vocab.n_data(), L, 1000000);
    std::vector<double> out(n_data_seqs, 0.0);
    double masked_mass = 0.0;
    for (size_t s = 0; s < n_states; ++s) {
        if (dist[s] == 0.0) {
            continue;
        }
        const std::vector<Token> seq = state_to_seq(s, vocab.K, L);
        if (has_mask(seq, vocab)) {
            masked_mass += dist[s];
            continue;
        }
        size_t idx = 0;
        for (Token t : seq) {
            idx = idx * static_cast<size_t>(vocab.n_data()) + static_cast<size_t>(t);
        }
        out[idx] = dist[s];
    }
    if (masked_mass > 1e-12) {
        throw NumericalError("reverse chain left mass on masked states");
    }
    return out;
}

double exact_model_nll(const std::vector<Token>& x, const Denoiser& den,
                       int T) {
    const Vocabulary& vocab = den.vocab();
    validate_data_seq(x, vocab);
    const int L = static_cast<int>(x.size());
    const std::vector<double> dist =
        reverse_chain_distribution(den, nelbo_chain_steps(T), L);
    size_t idx = 0;
    for (Token t : x) {
        idx = idx * static_cast<size_t>(vocab.n_data()) + static_cast<size_t>(t);
    }
    const double p = dist[idx];
    if (p <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -std::log(p);
}

std::vector<double> sampler_distribution(const Denoiser& den,
                                         const NoiseSchedule& sched, int T) {
    return reverse_chain_distribution(den, sampler_chain_steps(sched, T),
                                      den.seq_len());
}

std::vector<BoundGapRow> bound_gap_report(const std::vector<Token>& x,
                                          const Denoiser& den,
                                          const std::vector<int>& T_list) {
    std::vector<BoundGapRow> rows;
    rows.reserve(T_list.size());
    for (int T : T_list) {
        ObjectiveVariant variant{ObjectiveKind::rb2_rb1_discrete, T};
        BoundGapRow row;
        row.T = T;
        row.nelbo = diffusion_loss_discrete_exhaustive(variant, x, den);
        row.nll = exact_model_nll(x, den, T);
        row.gap = row.nelbo - row.nll;
        if (row.gap < -1e-9) {
            throw NumericalError("variational bound violated at T=" +
                                 std::to_string(T) +
                                 ": gap=" + std::to_string(row.gap));
        }
        rows.push_back(row);
    }
    return rows;
}

double entropy_rate(const DataDistribution& dist) { return dist.entropy(); }

}  // namespace maskdiff
